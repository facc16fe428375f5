//! From an inverter for a keyed family to a distinguisher against Haar
//! states, and the bound on how often that distinguisher fires on Haar input.
//!
//! The distinguisher gets `t + 1` copies, hands the first `t` to the
//! inverter, and projects the last copy onto the state of the returned key.
//! On Haar input it accepts with probability at most
//! `δ = 2^n (f/(f+1))^{2^m − 1} + 1/f` for every `f > 0`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::Bitstring;
use crate::error::{Error, Result};
use crate::generators::{CopyRegister, Inverter, KeyedStateGenerator};
use crate::haarstats::sample_haar;
use crate::rng::{fold_trials, SeededRng};
use crate::statevec::{fidelity, index_of, projective_test, StateVector};
use crate::stats::{MeanEstimate, Proportion};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaParams {
    pub n: u32,
    pub m: u32,
    pub f: f64,
}

impl DeltaParams {
    pub fn new(n: u32, m: u32, f: f64) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidParams(format!("need n, m ≥ 1, got ({n}, {m})")));
        }
        if f <= 0.0 || !f.is_finite() {
            return Err(Error::InvalidParams(format!("f must be positive and finite, got {f}")));
        }
        Ok(Self { n, m, f })
    }

    /// ln of the key-union term `2^n (f/(f+1))^{2^m − 1}`.
    pub fn ln_keys_term(&self) -> f64 {
        let outputs = 2f64.powi(self.m as i32) - 1.0;
        f64::from(self.n) * std::f64::consts::LN_2 - outputs * (1.0 / self.f).ln_1p()
    }

    pub fn keys_term(&self) -> f64 {
        self.ln_keys_term().exp()
    }

    pub fn f_term(&self) -> f64 {
        1.0 / self.f
    }
}

/// `2^n (f/(f+1))^{2^m − 1} + 1/f`, evaluated in log space.
pub fn delta_bound(p: &DeltaParams) -> f64 {
    (p.keys_term() + p.f_term()).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// `f = 2`; meaningful once `m > log₂ n + 1`.
    Weak,
    /// `f = (2^m − 1)/2^{m/2} − 1`.
    Strong,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::Weak => "weak",
            Preset::Strong => "strong",
        }
    }
}

pub fn theorem_presets(which: Preset, n: u32, m: u32) -> Result<DeltaParams> {
    let f = match which {
        Preset::Weak => 2.0,
        Preset::Strong => {
            let f = (2f64.powi(m as i32) - 1.0) / 2f64.powf(f64::from(m) / 2.0) - 1.0;
            if f.is_nan() || f <= 0.0 {
                return Err(Error::InvalidParams(format!("strong preset gives f = {f} ≤ 0 at m = {m}")));
            }
            f
        }
    };
    DeltaParams::new(n, m, f)
}

/// `⌈log₂ n⌉ + 1`, the smallest output length used with the weak preset.
pub fn weak_output_qubits(n: u32) -> u32 {
    assert!(n >= 1);
    (u32::BITS - (n - 1).leading_zeros()) + 1
}

/// Smallest `n₀ ≥ 2` such that the weak preset at `m = ⌈log₂ n⌉ + 1` gives
/// `δ < 3/4` for every `n ∈ [n₀, max_n]`.
pub fn weak_preset_crossover(max_n: u32) -> Option<u32> {
    let mut crossover = None;
    for n in (2..=max_n).rev() {
        let p = theorem_presets(Preset::Weak, n, weak_output_qubits(n)).ok()?;
        if delta_bound(&p) < 0.75 {
            crossover = Some(n);
        } else {
            break;
        }
    }
    crossover
}

/// Guesses a uniformly random key.
#[derive(Clone, Copy, Debug)]
pub struct RandomGuessInverter {
    pub key_bits: usize,
}

impl Inverter for RandomGuessInverter {
    fn name(&self) -> &'static str {
        "random-guess"
    }

    fn invert(&self, _copies: &CopyRegister, rng: &mut SeededRng) -> Result<Bitstring> {
        let k = rng.random::<u64>() & ((1u64 << self.key_bits) - 1);
        Ok(Bitstring::from_value(k, self.key_bits))
    }
}

/// Measures every copy in the computational basis and returns the maximum
/// likelihood key for the observed outcomes (smallest key on ties).
#[derive(Clone, Debug)]
pub struct MeasureAndMatchInverter {
    key_bits: usize,
    probabilities: Vec<Vec<f64>>,
}

impl MeasureAndMatchInverter {
    pub fn new(gen: &KeyedStateGenerator) -> Result<Self> {
        let probabilities = gen.enumerate()?.iter().map(StateVector::probabilities).collect();
        Ok(Self { key_bits: gen.key_bits(), probabilities })
    }
}

impl Inverter for MeasureAndMatchInverter {
    fn name(&self) -> &'static str {
        "measure-and-match"
    }

    fn invert(&self, copies: &CopyRegister, rng: &mut SeededRng) -> Result<Bitstring> {
        let outcomes: Vec<usize> =
            (0..copies.copies()).map(|_| index_of(&crate::statevec::measure_all(copies.single(), rng))).collect();
        let mut best = (0u64, f64::NEG_INFINITY);
        for (k, probs) in self.probabilities.iter().enumerate() {
            let ll: f64 = outcomes.iter().map(|&x| probs[x].ln()).sum();
            if ll > best.1 + 1e-12 {
                best = (k as u64, ll);
            }
        }
        Ok(Bitstring::from_value(best.0, self.key_bits))
    }
}

/// One run of the distinguisher on `t + 1` copies of `input_state`.
pub fn distinguisher_accepts(
    gen: &KeyedStateGenerator,
    inverter: &dyn Inverter,
    input_state: &StateVector,
    t: usize,
    rng: &mut SeededRng,
) -> Result<bool> {
    if input_state.num_qubits() != gen.output_qubits() {
        return Err(Error::InvalidInput(format!(
            "input has {} qubits, family outputs {}",
            input_state.num_qubits(),
            gen.output_qubits()
        )));
    }
    let register = CopyRegister::new(input_state.clone(), t + 1)?;
    let (first, last) = register.split_last()?;
    let guess = inverter.invert(&first, rng)?;
    let reference = gen.evaluate(&guess)?;
    projective_test(&last, &reference, rng)
}

/// Acceptance frequencies of the distinguisher on both kinds of input.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvantageReport {
    pub accept_prob_pseudorandom: f64,
    pub accept_prob_haar: f64,
    pub advantage: f64,
    pub trials: u64,
    pub ci_pseudorandom: f64,
    pub ci_haar: f64,
}

impl AdvantageReport {
    fn from_counts(prs: Proportion, haar: Proportion) -> Self {
        Self {
            accept_prob_pseudorandom: prs.estimate(),
            accept_prob_haar: haar.estimate(),
            advantage: (prs.estimate() - haar.estimate()).abs(),
            trials: prs.trials,
            ci_pseudorandom: prs.three_sigma(),
            ci_haar: haar.three_sigma(),
        }
    }
}

/// Estimates acceptance on `|φ_k⟩` (uniform `k`) and on Haar input, `trials` each.
pub fn measure_advantage(
    gen: &KeyedStateGenerator,
    inverter: &dyn Inverter,
    t: usize,
    trials: u64,
    rng: &mut SeededRng,
) -> Result<AdvantageReport> {
    if trials < 100 {
        return Err(Error::InvalidParams(format!("need at least 100 trials, got {trials}")));
    }
    let prs_seed: u64 = rng.random();
    let haar_seed: u64 = rng.random();
    let prs = count_accepts(trials, prs_seed, |rng| {
        let k = rng.random::<u64>() & (gen.num_keys() - 1);
        let input = gen.evaluate_value(k)?;
        distinguisher_accepts(gen, inverter, &input, t, rng)
    })?;
    let haar = count_accepts(trials, haar_seed, |rng| {
        let input = sample_haar(gen.output_qubits(), rng)?;
        distinguisher_accepts(gen, inverter, &input, t, rng)
    })?;
    Ok(AdvantageReport::from_counts(prs, haar))
}

fn count_accepts<F>(trials: u64, seed: u64, trial: F) -> Result<Proportion>
where
    F: Fn(&mut SeededRng) -> Result<bool> + Sync,
{
    let hits = fold_trials(
        trials as usize,
        seed,
        || Ok(0u64),
        |acc: &mut Result<u64>, rng, _| {
            if let Ok(count) = acc {
                match trial(rng) {
                    Ok(true) => *count += 1,
                    Ok(false) => {}
                    Err(e) => *acc = Err(e),
                }
            }
        },
        |a, b| Ok(a? + b?),
    )?;
    Ok(Proportion::new(hits, trials))
}

/// `E_k[|⟨φ_k|φ_{k'}⟩|²]` with `k' ← inverter(|φ_k⟩^{⊗t})`, averaging exact
/// fidelities instead of projective-test outcomes.
pub fn inversion_expectation(
    gen: &KeyedStateGenerator,
    inverter: &dyn Inverter,
    t: usize,
    trials: u64,
    rng: &mut SeededRng,
) -> Result<MeanEstimate> {
    let seed: u64 = rng.random();
    mean_over_trials(trials, seed, |rng| {
        let k = rng.random::<u64>() & (gen.num_keys() - 1);
        let phi = gen.evaluate_value(k)?;
        let guess = inverter.invert(&CopyRegister::new(phi.clone(), t)?, rng)?;
        fidelity(&phi, &gen.evaluate(&guess)?)
    })
}

/// `E_{ψ ← Haar}[max_k |⟨ψ|φ_k⟩|²]`, which dominates the Haar-side
/// acceptance of every inverter.
pub fn haar_max_fidelity(table: &[StateVector], trials: u64, rng: &mut SeededRng) -> Result<MeanEstimate> {
    let m = table.first().ok_or_else(|| Error::InvalidInput("empty key table".into()))?.num_qubits();
    let seed: u64 = rng.random();
    mean_over_trials(trials, seed, |rng| {
        let psi = sample_haar(m, rng)?;
        table.iter().try_fold(0.0f64, |best, phi| Ok(best.max(fidelity(phi, &psi)?)))
    })
}

fn mean_over_trials<F>(trials: u64, seed: u64, trial: F) -> Result<MeanEstimate>
where
    F: Fn(&mut SeededRng) -> Result<f64> + Sync,
{
    fold_trials(
        trials as usize,
        seed,
        || Ok(MeanEstimate::default()),
        |acc: &mut Result<MeanEstimate>, rng, _| {
            if let Ok(est) = acc {
                match trial(rng) {
                    Ok(x) => est.push(x),
                    Err(e) => *acc = Err(e),
                }
            }
        },
        |a, b| Ok(a?.merge(b?)),
    )
}
