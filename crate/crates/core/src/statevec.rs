//! Dense pure-state simulation.
//!
//! Qubit `q` corresponds to bit `q` of an amplitude index, so qubit 0 is the
//! least significant bit. Measured bit strings list qubit 0 first.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::Bitstring;
use crate::error::{Error, Result};

/// Largest register held as a single dense state.
pub const MAX_QUBITS: usize = 20;
/// Largest register allowed for materialized tensor powers.
pub const MAX_TENSOR_QUBITS: usize = 14;
/// Allowed deviation of the squared norm from one.
pub const NORM_TOLERANCE: f64 = 1e-9;
/// Outcomes with smaller probability count as impossible.
pub const ZERO_PROBABILITY: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// The all-zeros basis state on `num_qubits` qubits.
    pub fn zero(num_qubits: usize) -> Result<Self> {
        check_qubits(num_qubits, MAX_QUBITS)?;
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Self { num_qubits, amplitudes })
    }

    /// Computational basis state with qubit `i` set to `bits[i]`.
    pub fn basis(bits: &Bitstring) -> Result<Self> {
        let mut state = Self::zero(bits.len())?;
        state.amplitudes[0] = Complex64::new(0.0, 0.0);
        state.amplitudes[index_of(bits)] = Complex64::new(1.0, 0.0);
        Ok(state)
    }

    /// Wraps amplitudes that are already normalized.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let num_qubits = qubits_for_len(amplitudes.len())?;
        let norm_sqr: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm_sqr - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::InvalidInput(format!("squared norm {norm_sqr} is not 1")));
        }
        Ok(Self { num_qubits, amplitudes })
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(mut amplitudes: Vec<Complex64>) -> Result<Self> {
        let num_qubits = qubits_for_len(amplitudes.len())?;
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm <= 0.0 || !norm.is_finite() {
            return Err(Error::InvalidInput("cannot normalize a zero vector".into()));
        }
        let inv = 1.0 / norm;
        amplitudes.iter_mut().for_each(|a| *a *= inv);
        Ok(Self { num_qubits, amplitudes })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        if self.num_qubits != other.num_qubits {
            return Err(Error::InvalidInput(format!(
                "qubit count mismatch: {} vs {}",
                self.num_qubits, other.num_qubits
            )));
        }
        Ok(self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum())
    }

    /// `self ⊗ other`, with `self` on the low qubits.
    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        let num_qubits = self.num_qubits + other.num_qubits;
        check_qubits(num_qubits, MAX_QUBITS)?;
        let mut amplitudes = Vec::with_capacity(1 << num_qubits);
        for b in &other.amplitudes {
            amplitudes.extend(self.amplitudes.iter().map(|a| a * b));
        }
        Ok(Self { num_qubits, amplitudes })
    }

    /// `self^{⊗t}`, capped at [`MAX_TENSOR_QUBITS`].
    pub fn tensor_power(&self, t: usize) -> Result<StateVector> {
        if t == 0 {
            return Err(Error::InvalidInput("tensor power needs t ≥ 1".into()));
        }
        check_qubits(self.num_qubits * t, MAX_TENSOR_QUBITS)?;
        let mut out = self.clone();
        for _ in 1..t {
            out = out.tensor(self)?;
        }
        Ok(out)
    }

    /// Probability that `qubits[j]` reads `outcome[j]` for every `j`.
    pub fn outcome_probability(&self, qubits: &[usize], outcome: &Bitstring) -> Result<f64> {
        let (mask, value) = self.selection(qubits, outcome)?;
        Ok(self.amplitudes.iter().enumerate().filter(|(x, _)| x & mask == value).map(|(_, a)| a.norm_sqr()).sum())
    }

    fn selection(&self, qubits: &[usize], outcome: &Bitstring) -> Result<(usize, usize)> {
        if qubits.len() != outcome.len() {
            return Err(Error::InvalidInput(format!("{} qubits but {}-bit outcome", qubits.len(), outcome.len())));
        }
        let mut mask = 0usize;
        let mut value = 0usize;
        for (&q, &bit) in qubits.iter().zip(outcome.bits()) {
            if q >= self.num_qubits {
                return Err(Error::InvalidInput(format!("qubit {q} out of range")));
            }
            if mask & (1 << q) != 0 {
                return Err(Error::InvalidInput(format!("qubit {q} listed twice")));
            }
            mask |= 1 << q;
            if bit {
                value |= 1 << q;
            }
        }
        Ok((mask, value))
    }
}

fn qubits_for_len(len: usize) -> Result<usize> {
    if len < 2 || !len.is_power_of_two() {
        return Err(Error::InvalidInput(format!("{len} amplitudes is not 2^m with m ≥ 1")));
    }
    let num_qubits = len.trailing_zeros() as usize;
    check_qubits(num_qubits, MAX_QUBITS)?;
    Ok(num_qubits)
}

pub(crate) fn check_qubits(num_qubits: usize, cap: usize) -> Result<()> {
    if num_qubits == 0 {
        return Err(Error::InvalidInput("a register needs at least one qubit".into()));
    }
    if num_qubits > cap {
        return Err(Error::DimensionTooLarge { qubits: num_qubits, cap });
    }
    Ok(())
}

/// Amplitude index of a basis string (bit `i` of the string is qubit `i`).
pub fn index_of(bits: &Bitstring) -> usize {
    bits.bits().iter().enumerate().fold(0, |acc, (i, &b)| acc | (usize::from(b) << i))
}

/// Inverse of [`index_of`].
pub fn bits_of(index: usize, num_qubits: usize) -> Bitstring {
    Bitstring::new((0..num_qubits).map(|i| (index >> i) & 1 == 1).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "gate", rename_all = "lowercase")]
pub enum Gate {
    H {
        target: usize,
    },
    S {
        target: usize,
    },
    T {
        target: usize,
    },
    X {
        target: usize,
    },
    Z {
        target: usize,
    },
    Cnot {
        control: usize,
        target: usize,
    },
    /// Phase `e^{iθ}` on the |11⟩ component of (control, target).
    CPhase {
        control: usize,
        target: usize,
        theta: f64,
    },
}

impl Gate {
    fn qubits(&self) -> (usize, Option<usize>) {
        match *self {
            Gate::H { target } | Gate::S { target } | Gate::T { target } | Gate::X { target } | Gate::Z { target } => {
                (target, None)
            }
            Gate::Cnot { control, target } | Gate::CPhase { control, target, .. } => (target, Some(control)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    num_qubits: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(num_qubits: usize) -> Result<Self> {
        check_qubits(num_qubits, MAX_QUBITS).map_err(|e| Error::InvalidCircuit(e.to_string()))?;
        Ok(Self { num_qubits, gates: Vec::new() })
    }

    pub fn from_gates(num_qubits: usize, gates: impl IntoIterator<Item = Gate>) -> Result<Self> {
        let mut circuit = Self::new(num_qubits)?;
        for gate in gates {
            circuit.push(gate)?;
        }
        Ok(circuit)
    }

    pub fn push(&mut self, gate: Gate) -> Result<&mut Self> {
        let (target, control) = gate.qubits();
        if target >= self.num_qubits || control.is_some_and(|c| c >= self.num_qubits) {
            return Err(Error::InvalidCircuit(format!("{gate:?} addresses a qubit ≥ {}", self.num_qubits)));
        }
        if control == Some(target) {
            return Err(Error::InvalidCircuit(format!("{gate:?} has control equal to target")));
        }
        self.gates.push(gate);
        Ok(self)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// A Hadamard layer followed by `len` gates drawn uniformly from
    /// {H, S, T, CNOT} (plus controlled-phase when `with_cphase`).
    pub fn random<R: Rng + ?Sized>(num_qubits: usize, len: usize, with_cphase: bool, rng: &mut R) -> Result<Self> {
        let mut circuit = Self::new(num_qubits)?;
        for q in 0..num_qubits {
            circuit.push(Gate::H { target: q })?;
        }
        let kinds = match (num_qubits > 1, with_cphase) {
            (false, _) => 3,
            (true, false) => 4,
            (true, true) => 5,
        };
        for _ in 0..len {
            let target = rng.random_range(0..num_qubits);
            let control = (target + rng.random_range(1..num_qubits.max(2))) % num_qubits;
            let gate = match rng.random_range(0..kinds) {
                0 => Gate::H { target },
                1 => Gate::S { target },
                2 => Gate::T { target },
                3 => Gate::Cnot { control, target },
                _ => Gate::CPhase { control, target, theta: rng.random_range(0.0..std::f64::consts::TAU) },
            };
            circuit.push(gate)?;
        }
        Ok(circuit)
    }

    /// Revalidates gates, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        Self::from_gates(self.num_qubits, self.gates.iter().copied()).map(|_| ())
    }
}

/// Returns `U|state⟩` for the circuit unitary `U`.
pub fn apply_circuit(state: &StateVector, circuit: &Circuit) -> Result<StateVector> {
    if circuit.num_qubits != state.num_qubits {
        return Err(Error::InvalidCircuit(format!(
            "circuit acts on {} qubits, state has {}",
            circuit.num_qubits, state.num_qubits
        )));
    }
    circuit.validate()?;
    let mut amps = state.amplitudes.clone();
    for gate in &circuit.gates {
        apply_gate(&mut amps, gate);
    }
    Ok(StateVector { num_qubits: state.num_qubits, amplitudes: amps })
}

fn apply_gate(amps: &mut [Complex64], gate: &Gate) {
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};
    match *gate {
        Gate::H { target } => {
            let bit = 1 << target;
            for i in 0..amps.len() {
                if i & bit == 0 {
                    let (a, b) = (amps[i], amps[i | bit]);
                    amps[i] = (a + b) * FRAC_1_SQRT_2;
                    amps[i | bit] = (a - b) * FRAC_1_SQRT_2;
                }
            }
        }
        Gate::X { target } => {
            let bit = 1 << target;
            for i in 0..amps.len() {
                if i & bit == 0 {
                    amps.swap(i, i | bit);
                }
            }
        }
        Gate::Z { target } => phase_where(amps, 1 << target, Complex64::new(-1.0, 0.0)),
        Gate::S { target } => phase_where(amps, 1 << target, Complex64::new(0.0, 1.0)),
        Gate::T { target } => phase_where(amps, 1 << target, Complex64::from_polar(1.0, FRAC_PI_4)),
        Gate::CPhase { control, target, theta } => {
            phase_where(amps, (1 << control) | (1 << target), Complex64::from_polar(1.0, theta))
        }
        Gate::Cnot { control, target } => {
            let (c, t) = (1 << control, 1 << target);
            for i in 0..amps.len() {
                if i & c != 0 && i & t == 0 {
                    amps.swap(i, i | t);
                }
            }
        }
    }
}

fn phase_where(amps: &mut [Complex64], mask: usize, phase: Complex64) {
    for (i, a) in amps.iter_mut().enumerate() {
        if i & mask == mask {
            *a *= phase;
        }
    }
}

/// Samples one computational-basis outcome index.
pub fn sample_index<R: Rng + ?Sized>(probabilities: &[f64], rng: &mut R) -> usize {
    let total: f64 = probabilities.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, &p) in probabilities.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_nonzero = i;
            if u < acc {
                return i;
            }
        }
    }
    last_nonzero
}

/// Measures every qubit in the computational basis.
pub fn measure_all<R: Rng + ?Sized>(state: &StateVector, rng: &mut R) -> Bitstring {
    let x = sample_index(&state.probabilities(), rng);
    bits_of(x, state.num_qubits)
}

/// Repeated sampling from one state, by inverse CDF over a prefix-sum table.
#[derive(Clone, Debug)]
pub struct OutcomeSampler {
    cumulative: Vec<f64>,
}

impl OutcomeSampler {
    pub fn new(probabilities: &[f64]) -> Self {
        let mut acc = 0.0;
        let cumulative = probabilities
            .iter()
            .map(|&p| {
                acc += p;
                acc
            })
            .collect();
        Self { cumulative }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty table");
        let u = rng.random::<f64>() * total;
        let idx = self.cumulative.partition_point(|&c| c <= u);
        idx.min(self.cumulative.len() - 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PostselectionResult {
    pub probability: f64,
    /// State of the unmeasured qubits, in their original relative order.
    pub residual: StateVector,
}

/// Projects `qubits` onto `outcome`, removes them, and renormalizes.
pub fn postselect(state: &StateVector, qubits: &[usize], outcome: &Bitstring) -> Result<PostselectionResult> {
    let (mask, value) = state.selection(qubits, outcome)?;
    if qubits.len() == state.num_qubits {
        return Err(Error::InvalidInput("postselection must leave at least one qubit; use outcome_probability".into()));
    }
    let kept: Vec<usize> = (0..state.num_qubits).filter(|q| mask & (1 << q) == 0).collect();
    let mut residual = vec![Complex64::new(0.0, 0.0); 1 << kept.len()];
    let mut probability = 0.0;
    for (r, slot) in residual.iter_mut().enumerate() {
        let mut x = value;
        for (j, &q) in kept.iter().enumerate() {
            x |= ((r >> j) & 1) << q;
        }
        *slot = state.amplitudes[x];
        probability += slot.norm_sqr();
    }
    if probability < ZERO_PROBABILITY {
        return Err(Error::ZeroProbabilityOutcome { probability });
    }
    let scale = 1.0 / probability.sqrt();
    residual.iter_mut().for_each(|a| *a *= scale);
    Ok(PostselectionResult { probability, residual: StateVector { num_qubits: kept.len(), amplitudes: residual } })
}

/// Pure-state fidelity |⟨a|b⟩|².
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(a.inner(b)?.norm_sqr())
}

/// Measures `state` in {|ref⟩⟨ref|, I − |ref⟩⟨ref|}; true on the first outcome.
pub fn projective_test<R: Rng + ?Sized>(state: &StateVector, reference: &StateVector, rng: &mut R) -> Result<bool> {
    let f = fidelity(state, reference)?;
    Ok(rng.random::<f64>() < f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn plus() -> StateVector {
        StateVector::from_amplitudes(vec![c(FRAC_1_SQRT_2), c(FRAC_1_SQRT_2)]).unwrap()
    }

    fn bell() -> StateVector {
        StateVector::from_amplitudes(vec![c(FRAC_1_SQRT_2), c(0.0), c(0.0), c(FRAC_1_SQRT_2)]).unwrap()
    }

    fn assert_state_eq(a: &StateVector, b: &StateVector) {
        assert_eq!(a.num_qubits(), b.num_qubits());
        for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
            assert_abs_diff_eq!(x.re, y.re, epsilon = 1e-12);
            assert_abs_diff_eq!(x.im, y.im, epsilon = 1e-12);
        }
    }

    #[test]
    fn hadamard_on_zero() {
        let circuit = Circuit::from_gates(1, [Gate::H { target: 0 }]).unwrap();
        let out = apply_circuit(&StateVector::zero(1).unwrap(), &circuit).unwrap();
        assert_state_eq(&out, &plus());
    }

    #[test]
    fn bell_circuit() {
        let circuit = Circuit::from_gates(2, [Gate::H { target: 0 }, Gate::Cnot { control: 0, target: 1 }]).unwrap();
        let out = apply_circuit(&StateVector::zero(2).unwrap(), &circuit).unwrap();
        assert_state_eq(&out, &bell());
    }

    #[test]
    fn empty_circuit_is_identity() {
        let circuit = Circuit::new(2).unwrap();
        assert_state_eq(&apply_circuit(&bell(), &circuit).unwrap(), &bell());
    }

    #[test]
    fn circuit_validation() {
        assert!(matches!(
            Circuit::from_gates(2, [Gate::Cnot { control: 1, target: 1 }]),
            Err(Error::InvalidCircuit(_))
        ));
        assert!(matches!(Circuit::from_gates(2, [Gate::X { target: 2 }]), Err(Error::InvalidCircuit(_))));
        let circuit = Circuit::new(3).unwrap();
        assert!(matches!(apply_circuit(&bell(), &circuit), Err(Error::InvalidCircuit(_))));
    }

    #[test]
    fn qubit_caps() {
        assert!(matches!(StateVector::zero(21), Err(Error::DimensionTooLarge { .. })));
        assert!(matches!(plus().tensor_power(15), Err(Error::DimensionTooLarge { .. })));
        assert_eq!(plus().tensor_power(14).unwrap().num_qubits(), 14);
    }

    #[test]
    fn phase_gates() {
        // T² = S, S² = Z on |1⟩.
        let one = StateVector::basis(&"1".parse().unwrap()).unwrap();
        let tt = Circuit::from_gates(1, [Gate::T { target: 0 }, Gate::T { target: 0 }]).unwrap();
        let s = Circuit::from_gates(1, [Gate::S { target: 0 }]).unwrap();
        assert_state_eq(&apply_circuit(&one, &tt).unwrap(), &apply_circuit(&one, &s).unwrap());
        let ss = Circuit::from_gates(1, [Gate::S { target: 0 }, Gate::S { target: 0 }]).unwrap();
        let z = Circuit::from_gates(1, [Gate::Z { target: 0 }]).unwrap();
        assert_state_eq(&apply_circuit(&one, &ss).unwrap(), &apply_circuit(&one, &z).unwrap());
        let cp = Circuit::from_gates(2, [Gate::CPhase { control: 0, target: 1, theta: 0.3 }]).unwrap();
        let out = apply_circuit(&StateVector::basis(&"11".parse().unwrap()).unwrap(), &cp).unwrap();
        assert_abs_diff_eq!(out.amplitudes()[3].arg(), 0.3, epsilon = 1e-12);
    }

    #[test]
    fn measure_basis_states() {
        let mut rng = seeded(3);
        let one = StateVector::basis(&"1".parse().unwrap()).unwrap();
        let zz = StateVector::zero(2).unwrap();
        for _ in 0..100 {
            assert_eq!(measure_all(&one, &mut rng).to_string(), "1");
            assert_eq!(measure_all(&zz, &mut rng).to_string(), "00");
        }
    }

    #[test]
    fn measure_plus_is_fair() {
        let mut rng = seeded(4);
        let state = plus();
        let ones = (0..100_000).filter(|_| measure_all(&state, &mut rng).get(0)).count();
        assert_abs_diff_eq!(ones as f64 / 1e5, 0.5, epsilon = 0.01);
    }

    #[test]
    fn postselect_examples() {
        let state = plus().tensor(&StateVector::zero(1).unwrap()).unwrap();
        let r = postselect(&state, &[0], &"0".parse().unwrap()).unwrap();
        assert_abs_diff_eq!(r.probability, 0.5, epsilon = 1e-12);
        assert_state_eq(&r.residual, &StateVector::zero(1).unwrap());

        let eleven = StateVector::basis(&"11".parse().unwrap()).unwrap();
        assert!(matches!(postselect(&eleven, &[0], &"0".parse().unwrap()), Err(Error::ZeroProbabilityOutcome { .. })));

        let r = postselect(&bell(), &[0], &"1".parse().unwrap()).unwrap();
        assert_abs_diff_eq!(r.probability, 0.5, epsilon = 1e-12);
        assert_state_eq(&r.residual, &StateVector::basis(&"1".parse().unwrap()).unwrap());
    }

    #[test]
    fn postselect_rejects_bad_selections() {
        let b = bell();
        assert!(matches!(postselect(&b, &[0, 0], &"00".parse().unwrap()), Err(Error::InvalidInput(_))));
        assert!(matches!(postselect(&b, &[2], &"0".parse().unwrap()), Err(Error::InvalidInput(_))));
        assert!(matches!(postselect(&b, &[0], &"01".parse().unwrap()), Err(Error::InvalidInput(_))));
        assert!(matches!(postselect(&b, &[0, 1], &"00".parse().unwrap()), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn fidelity_examples() {
        let zero = StateVector::zero(1).unwrap();
        let one = StateVector::basis(&"1".parse().unwrap()).unwrap();
        assert_abs_diff_eq!(fidelity(&zero, &zero).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fidelity(&zero, &one).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fidelity(&zero, &plus()).unwrap(), 0.5, epsilon = 1e-12);
        assert!(matches!(fidelity(&zero, &bell()), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn projective_test_examples() {
        let mut rng = seeded(5);
        let zero = StateVector::zero(1).unwrap();
        let one = StateVector::basis(&"1".parse().unwrap()).unwrap();
        for _ in 0..1000 {
            assert!(projective_test(&zero, &zero, &mut rng).unwrap());
            assert!(!projective_test(&zero, &one, &mut rng).unwrap());
        }
        let hits = (0..100_000).filter(|_| projective_test(&plus(), &zero, &mut rng).unwrap()).count();
        assert_abs_diff_eq!(hits as f64 / 1e5, 0.5, epsilon = 0.01);
        assert!(projective_test(&zero, &bell(), &mut rng).is_err());
    }

    #[test]
    fn outcome_sampler_matches_linear_scan() {
        let probs = [0.1, 0.0, 0.6, 0.3];
        let sampler = OutcomeSampler::new(&probs);
        let mut counts = [0usize; 4];
        let mut rng = seeded(9);
        for _ in 0..100_000 {
            counts[sampler.sample(&mut rng)] += 1;
        }
        assert_eq!(counts[1], 0);
        for (c, p) in counts.iter().zip(probs) {
            assert_abs_diff_eq!(*c as f64 / 1e5, p, epsilon = 0.01);
        }
    }

    fn arb_gate(num_qubits: usize) -> impl Strategy<Value = Gate> {
        let q = 0..num_qubits;
        (0u8..7, q.clone(), q, -3.2f64..3.2).prop_map(move |(kind, a, b, theta)| {
            let other = if a == b { (a + 1) % num_qubits } else { b };
            match kind {
                0 => Gate::H { target: a },
                1 => Gate::S { target: a },
                2 => Gate::T { target: a },
                3 => Gate::X { target: a },
                4 => Gate::Z { target: a },
                5 => Gate::Cnot { control: a, target: other },
                _ => Gate::CPhase { control: a, target: other, theta },
            }
        })
    }

    fn arb_circuit() -> impl Strategy<Value = Circuit> {
        (2usize..=12).prop_flat_map(|n| {
            proptest::collection::vec(arb_gate(n), 0..=100).prop_map(move |g| Circuit::from_gates(n, g).unwrap())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn circuits_preserve_norm(circuit in arb_circuit()) {
            let start = apply_circuit(&StateVector::zero(circuit.num_qubits()).unwrap(),
                &Circuit::from_gates(circuit.num_qubits(), (0..circuit.num_qubits()).map(|q| Gate::H { target: q })).unwrap()).unwrap();
            let out = apply_circuit(&start, &circuit).unwrap();
            prop_assert!((out.norm_sqr().sqrt() - 1.0).abs() < 1e-8);
        }

        #[test]
        fn postselection_probabilities_sum_to_one(circuit in arb_circuit(), pick in 1usize..4) {
            let n = circuit.num_qubits();
            let state = apply_circuit(&StateVector::zero(n).unwrap(), &circuit).unwrap();
            let k = pick.min(n - 1);
            let qubits: Vec<usize> = (0..k).map(|j| (j * 5 + 1) % n).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
            let total: f64 = (0..1u64 << qubits.len())
                .map(|v| state.outcome_probability(&qubits, &Bitstring::from_value(v, qubits.len())).unwrap())
                .sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
    }
}
