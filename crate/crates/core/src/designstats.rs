//! Moment operators `E[|ψ⟩⟨ψ|^{⊗t}]` of state ensembles and their trace-norm
//! distance to the Haar moment.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::{BruteForceInverter, KeyedStateGenerator, MAX_ENUMERATED_KEY_BITS};
use crate::haarstats::sample_haar;
use crate::reduction::{delta_bound, measure_advantage, AdvantageReport, DeltaParams};
use crate::rng::{fold_trials, SeededRng};
use crate::statevec::{check_qubits, StateVector};

/// Moments are dense `d^t × d^t` matrices; `d^t` is capped at `2^12`.
pub const MAX_MOMENT_QUBITS: usize = 12;
/// Exact averages over keys enumerate at most `2^12` keys.
pub const MAX_EXACT_DESIGN_KEY_BITS: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct MomentOperator {
    num_qubits: usize,
    t: usize,
    matrix: DMatrix<Complex64>,
}

impl MomentOperator {
    fn zeros(num_qubits: usize, t: usize) -> Result<Self> {
        check_moment_size(num_qubits, t)?;
        let dim = 1usize << (num_qubits * t);
        Ok(Self { num_qubits, t, matrix: DMatrix::zeros(dim, dim) })
    }

    /// Wraps a `d^t × d^t` matrix, checking the size only.
    pub fn from_matrix(num_qubits: usize, t: usize, matrix: DMatrix<Complex64>) -> Result<Self> {
        check_moment_size(num_qubits, t)?;
        let dim = 1usize << (num_qubits * t);
        if matrix.shape() != (dim, dim) {
            return Err(Error::InvalidInput(format!("expected a {dim}×{dim} matrix, got {:?}", matrix.shape())));
        }
        Ok(Self { num_qubits, t, matrix })
    }

    /// `|ψ⟩⟨ψ|^{⊗t}`.
    pub fn pure(state: &StateVector, t: usize) -> Result<Self> {
        moment_of_states(std::slice::from_ref(state), t)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn copies(&self) -> usize {
        self.t
    }

    /// `d^t`.
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    /// Largest entry of `|M − M†|`.
    pub fn hermiticity_error(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.matrix)
    }

    fn add_outer(&mut self, v: &DVector<Complex64>, weight: f64) {
        self.matrix.gerc(Complex64::new(weight, 0.0), v, v, Complex64::new(1.0, 0.0));
    }
}

fn check_moment_size(num_qubits: usize, t: usize) -> Result<()> {
    if num_qubits == 0 || t == 0 {
        return Err(Error::InvalidParams("moments need m ≥ 1 and t ≥ 1".into()));
    }
    check_qubits(num_qubits.saturating_mul(t), MAX_MOMENT_QUBITS)
}

fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    let symmetrized = (m + m.adjoint()).scale(0.5);
    let mut eig: Vec<f64> = SymmetricEigen::new(symmetrized).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| a.total_cmp(b));
    eig
}

fn power_vector(state: &StateVector, t: usize) -> Result<DVector<Complex64>> {
    Ok(DVector::from_column_slice(state.tensor_power(t)?.amplitudes()))
}

/// Something that produces random pure states of a fixed size.
pub trait StateSource: Sync {
    fn num_qubits(&self) -> usize;
    fn sample(&self, rng: &mut SeededRng) -> Result<StateVector>;
}

#[derive(Clone, Copy, Debug)]
pub struct HaarSource {
    pub num_qubits: usize,
}

impl StateSource for HaarSource {
    fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    fn sample(&self, rng: &mut SeededRng) -> Result<StateVector> {
        sample_haar(self.num_qubits, rng)
    }
}

/// Always the same state.
#[derive(Clone, Debug)]
pub struct PointMass(pub StateVector);

impl StateSource for PointMass {
    fn num_qubits(&self) -> usize {
        self.0.num_qubits()
    }

    fn sample(&self, _rng: &mut SeededRng) -> Result<StateVector> {
        Ok(self.0.clone())
    }
}

/// `|φ_k⟩` for a uniformly random key.
#[derive(Clone, Copy, Debug)]
pub struct UniformKeySource<'a>(pub &'a KeyedStateGenerator);

impl StateSource for UniformKeySource<'_> {
    fn num_qubits(&self) -> usize {
        self.0.output_qubits()
    }

    fn sample(&self, rng: &mut SeededRng) -> Result<StateVector> {
        let k = rng.random::<u64>() & (self.0.num_keys() - 1);
        self.0.evaluate_value(k)
    }
}

/// Average of `|ψ⟩⟨ψ|^{⊗t}` over `samples` draws from `source`.
pub fn empirical_moment(
    source: &dyn StateSource,
    t: usize,
    samples: u64,
    rng: &mut SeededRng,
) -> Result<MomentOperator> {
    if samples == 0 {
        return Err(Error::InvalidParams("need at least one sample".into()));
    }
    let m = source.num_qubits();
    check_moment_size(m, t)?;
    let weight = 1.0 / samples as f64;
    let seed: u64 = rng.random();
    fold_trials(
        samples as usize,
        seed,
        || MomentOperator::zeros(m, t),
        |acc, rng, _| {
            let Ok(moment) = acc else { return };
            match source.sample(rng).and_then(|psi| power_vector(&psi, t)) {
                Ok(v) => moment.add_outer(&v, weight),
                Err(e) => *acc = Err(e),
            }
        },
        |a, b| {
            let (mut a, b) = (a?, b?);
            a.matrix += b.matrix;
            Ok(a)
        },
    )
}

/// Uniform average of `|ψ⟩⟨ψ|^{⊗t}` over `states`.
pub fn moment_of_states(states: &[StateVector], t: usize) -> Result<MomentOperator> {
    let first = states.first().ok_or_else(|| Error::InvalidInput("no states to average".into()))?;
    let mut moment = MomentOperator::zeros(first.num_qubits(), t)?;
    let weight = 1.0 / states.len() as f64;
    for psi in states {
        if psi.num_qubits() != first.num_qubits() {
            return Err(Error::InvalidInput("states of different sizes".into()));
        }
        moment.add_outer(&power_vector(psi, t)?, weight);
    }
    Ok(moment)
}

/// Projector onto the symmetric subspace of `(C^d)^{⊗t}` divided by its
/// dimension `binom(d + t − 1, t)`.
///
/// Basis states are grouped by the multiset of their per-copy digits; each
/// group spans one symmetric basis vector, the uniform superposition over
/// the group, contributing `1/|group|` to every entry within the group.
pub fn haar_moment(num_qubits: usize, t: usize) -> Result<MomentOperator> {
    let mut moment = MomentOperator::zeros(num_qubits, t)?;
    let d = 1usize << num_qubits;
    let mut groups: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    for x in 0..moment.dim() {
        let mut digits: Vec<usize> = (0..t).map(|c| (x >> (c * num_qubits)) & (d - 1)).collect();
        digits.sort_unstable();
        groups.entry(digits).or_default().push(x);
    }
    let sym_dim = groups.len() as f64;
    for members in groups.values() {
        let entry = Complex64::new(1.0 / (members.len() as f64 * sym_dim), 0.0);
        for &i in members {
            for &j in members {
                moment.matrix[(i, j)] = entry;
            }
        }
    }
    Ok(moment)
}

/// `binom(d + t − 1, t)` for `d = 2^m`.
pub fn symmetric_dimension(num_qubits: usize, t: usize) -> f64 {
    let d = (1u64 << num_qubits) as f64;
    (1..=t).fold(1.0, |acc, i| acc * (d + i as f64 - 1.0) / i as f64)
}

/// Schatten 1-norm `‖a − b‖₁`.
pub fn trace_distance(a: &MomentOperator, b: &MomentOperator) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::InvalidInput(format!("moment dimensions differ: {} vs {}", a.dim(), b.dim())));
    }
    Ok(hermitian_eigenvalues(&(&a.matrix - &b.matrix)).iter().map(|l| l.abs()).sum())
}

/// How the family moment is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum DesignMode {
    /// Average over every key.
    ExactOverKeys,
    /// Average over `samples` uniformly random keys.
    Sampled { samples: u64 },
}

impl DesignMode {
    pub fn name(&self) -> &'static str {
        match self {
            DesignMode::ExactOverKeys => "exact-over-keys",
            DesignMode::Sampled { .. } => "sampled",
        }
    }
}

/// `ε̂ = ‖E_k[|φ_k⟩⟨φ_k|^{⊗t}] − Haar moment‖₁`.
pub fn design_quality(gen: &KeyedStateGenerator, t: usize, mode: DesignMode, rng: &mut SeededRng) -> Result<f64> {
    let family = family_moment(gen, t, mode, rng)?;
    trace_distance(&family, &haar_moment(gen.output_qubits(), t)?)
}

fn family_moment(gen: &KeyedStateGenerator, t: usize, mode: DesignMode, rng: &mut SeededRng) -> Result<MomentOperator> {
    match mode {
        DesignMode::ExactOverKeys => {
            let limit = MAX_EXACT_DESIGN_KEY_BITS.min(MAX_ENUMERATED_KEY_BITS);
            if gen.key_bits() > limit {
                return Err(Error::TooManyKeys { key_bits: gen.key_bits(), limit });
            }
            check_moment_size(gen.output_qubits(), t)?;
            moment_of_states(&gen.enumerate()?, t)
        }
        DesignMode::Sampled { samples } => empirical_moment(&UniformKeySource(gen), t, samples, rng),
    }
}

/// A `(t, m)` pair that fits the key budget `n = c·m·t + c·λ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignBudget {
    pub t: u32,
    pub m: u32,
}

/// For each `t ≥ 1`, the largest `m ≥ 1` with `c·(m·t + λ) ≤ n`.
pub fn achievable_designs(n: u32, c: f64, lambda: u32) -> Result<Vec<DesignBudget>> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParams(format!("constant c = {c} must be positive")));
    }
    let spare = n as f64 / c - lambda as f64;
    let mut out = Vec::new();
    let mut t = 1u32;
    while spare >= t as f64 {
        out.push(DesignBudget { t, m: (spare / t as f64).floor() as u32 });
        t += 1;
    }
    Ok(out)
}

/// One instance of the design-to-one-wayness chain: the distinguisher on `t`
/// inverter copies plus one test copy sees `t + 1` copies, so its acceptance
/// on the family can exceed its Haar acceptance by at most the `(t+1)`-copy
/// design error, and the Haar acceptance is itself bounded by `δ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignChainReport {
    pub t: usize,
    pub epsilon_hat: f64,
    pub advantage: AdvantageReport,
    /// Smallest `δ(n, m, f)` over `f ∈ {1, 2, 4, 8}`.
    pub delta: f64,
    /// Family acceptance ≤ Haar acceptance + ε̂ + both CIs.
    pub design_gap_holds: bool,
    /// Family acceptance ≤ δ + ε̂ + its CI.
    pub delta_chain_holds: bool,
}

/// Runs the chain with the brute-force inverter and the exact `(t+1)`-copy
/// design error.
pub fn design_chain(
    gen: &KeyedStateGenerator,
    t: usize,
    trials: u64,
    rng: &mut SeededRng,
) -> Result<DesignChainReport> {
    let epsilon_hat = design_quality(gen, t + 1, DesignMode::ExactOverKeys, rng)?;
    let inverter = BruteForceInverter::new(gen)?;
    let advantage = measure_advantage(gen, &inverter, t, trials, rng)?;
    let delta = [1.0, 2.0, 4.0, 8.0]
        .into_iter()
        .map(|f| DeltaParams::new(gen.key_bits() as u32, gen.output_qubits() as u32, f).map(|p| delta_bound(&p)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let prs = advantage.accept_prob_pseudorandom;
    Ok(DesignChainReport {
        t,
        epsilon_hat,
        advantage,
        delta,
        design_gap_holds: prs
            <= advantage.accept_prob_haar + epsilon_hat + advantage.ci_pseudorandom + advantage.ci_haar,
        delta_chain_holds: prs <= delta + epsilon_hat + advantage.ci_pseudorandom,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::Bitstring;
    use crate::generators::FamilyKind;
    use crate::rng::seeded;
    use approx::assert_abs_diff_eq;

    fn assert_valid(m: &MomentOperator) {
        assert!(m.hermiticity_error() < 1e-9);
        assert_abs_diff_eq!(m.trace().re, 1.0, epsilon = 1e-8);
        assert!(m.eigenvalues()[0] > -1e-9);
    }

    #[test]
    fn haar_moment_examples() {
        let one = haar_moment(1, 1).unwrap();
        assert_abs_diff_eq!(one.matrix()[(0, 0)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(one.matrix()[(0, 1)].norm(), 0.0, epsilon = 1e-15);
        let two = haar_moment(1, 2).unwrap();
        let eig = two.eigenvalues();
        assert_abs_diff_eq!(eig[0], 0.0, epsilon = 1e-12);
        for &l in &eig[1..] {
            assert_abs_diff_eq!(l, 1.0 / 3.0, epsilon = 1e-12);
        }
        for (m, t) in [(1, 1), (1, 3), (2, 2), (3, 2), (2, 3)] {
            let h = haar_moment(m, t).unwrap();
            assert_abs_diff_eq!(h.trace().re, 1.0, epsilon = 1e-12);
            let scaled = h.matrix().scale(symmetric_dimension(m, t));
            let diff = (&scaled * &scaled - &scaled).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(diff < 1e-8, "({m}, {t})");
        }
        assert!(matches!(haar_moment(4, 4), Err(Error::DimensionTooLarge { .. })));
    }

    #[test]
    fn symmetric_dimensions() {
        assert_eq!(symmetric_dimension(1, 2), 3.0);
        assert_eq!(symmetric_dimension(2, 2), 10.0);
        assert_eq!(symmetric_dimension(1, 3), 4.0);
    }

    #[test]
    fn trace_distance_examples() {
        let zero = MomentOperator::pure(&StateVector::zero(1).unwrap(), 1).unwrap();
        let one = MomentOperator::pure(&StateVector::basis(&"1".parse().unwrap()).unwrap(), 1).unwrap();
        assert_abs_diff_eq!(trace_distance(&zero, &one).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(trace_distance(&zero, &zero).unwrap(), 0.0, epsilon = 1e-12);
        assert!(trace_distance(&zero, &haar_moment(1, 2).unwrap()).is_err());
    }

    #[test]
    fn empirical_haar_moments_converge() {
        let mut rng = seeded(70);
        let m1 = empirical_moment(&HaarSource { num_qubits: 1 }, 1, 10_000, &mut rng).unwrap();
        assert_valid(&m1);
        assert!(trace_distance(&m1, &haar_moment(1, 1).unwrap()).unwrap() < 0.01 * 3.0);
        let m2 = empirical_moment(&HaarSource { num_qubits: 1 }, 2, 10_000, &mut rng).unwrap();
        assert_valid(&m2);
        assert!(trace_distance(&m2, &haar_moment(1, 2).unwrap()).unwrap() < 0.05);
    }

    #[test]
    fn point_mass_moment_is_exact() {
        let mut rng = seeded(71);
        for t in 1..=3 {
            let m = empirical_moment(&PointMass(StateVector::zero(2).unwrap()), t, 50, &mut rng).unwrap();
            assert_abs_diff_eq!(m.matrix()[(0, 0)].re, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(m.matrix().iter().map(|z| z.norm()).sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn caps_are_enforced() {
        let mut rng = seeded(72);
        assert!(matches!(
            empirical_moment(&HaarSource { num_qubits: 7 }, 2, 10, &mut rng),
            Err(Error::DimensionTooLarge { .. })
        ));
        let gen = KeyedStateGenerator::new(FamilyKind::Lookup, 13, 1, 0).unwrap();
        assert!(matches!(design_quality(&gen, 1, DesignMode::ExactOverKeys, &mut rng), Err(Error::TooManyKeys { .. })));
    }

    #[test]
    fn constant_family_quality() {
        let mut rng = seeded(73);
        for m in 1..=4 {
            let gen = KeyedStateGenerator::new(FamilyKind::Constant, 3, m, 0).unwrap();
            let d = (1u64 << m) as f64;
            for mode in [DesignMode::ExactOverKeys, DesignMode::Sampled { samples: 100 }] {
                let eps = design_quality(&gen, 1, mode, &mut rng).unwrap();
                assert_abs_diff_eq!(eps, 2.0 * (1.0 - 1.0 / d), epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn lookup_family_quality_improves_with_keys() {
        let mut rng = seeded(74);
        let eps: Vec<f64> = [2, 4, 6, 8]
            .into_iter()
            .map(|n| {
                let gen = KeyedStateGenerator::new(FamilyKind::Lookup, n, 2, 5).unwrap();
                design_quality(&gen, 1, DesignMode::ExactOverKeys, &mut rng).unwrap()
            })
            .collect();
        assert!(eps.windows(2).all(|w| w[1] < w[0]), "{eps:?}");
        assert!(eps[2] < 0.5);
    }

    #[test]
    fn uniform_key_source_matches_enumeration() {
        let gen = KeyedStateGenerator::new(FamilyKind::Rotation, 3, 1, 9).unwrap();
        let exact = moment_of_states(&gen.enumerate().unwrap(), 2).unwrap();
        let sampled = empirical_moment(&UniformKeySource(&gen), 2, 20_000, &mut seeded(75)).unwrap();
        assert!(trace_distance(&exact, &sampled).unwrap() < 0.05);
    }

    #[test]
    fn moments_are_deterministic_in_the_seed() {
        let a = empirical_moment(&HaarSource { num_qubits: 1 }, 2, 3000, &mut seeded(76)).unwrap();
        let b = empirical_moment(&HaarSource { num_qubits: 1 }, 2, 3000, &mut seeded(76)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn design_budget_helper() {
        let pairs = achievable_designs(12, 1.0, 2).unwrap();
        assert_eq!(pairs.first(), Some(&DesignBudget { t: 1, m: 10 }));
        assert_eq!(pairs.last(), Some(&DesignBudget { t: 10, m: 1 }));
        assert!(pairs.iter().all(|p| p.m * p.t + 2 <= 12));
        assert!(achievable_designs(2, 2.0, 1).unwrap().is_empty());
        assert!(achievable_designs(2, 0.0, 1).is_err());
    }

    #[test]
    fn design_chain_inequalities_hold() {
        let mut rng = seeded(77);
        for (n, m, t) in [(3, 1, 1), (4, 2, 1), (3, 1, 2)] {
            let gen = KeyedStateGenerator::new(FamilyKind::Lookup, n, m, 3).unwrap();
            let report = design_chain(&gen, t, 2000, &mut rng).unwrap();
            assert!(report.design_gap_holds, "{report:?}");
            assert!(report.delta_chain_holds, "{report:?}");
        }
    }

    #[test]
    fn pure_moment_of_basis_state() {
        let psi = StateVector::basis(&Bitstring::from_value(2, 2)).unwrap();
        let m = MomentOperator::pure(&psi, 2).unwrap();
        // |10⟩ has index 1 (qubit 0 set), so |ψ⟩^{⊗2} sits at 1 + 4·1 = 5.
        assert_abs_diff_eq!(m.matrix()[(5, 5)].re, 1.0, epsilon = 1e-15);
    }
}
