//! Haar-random states and the tail laws of their overlap with a fixed state.
//!
//! For a fixed state and a Haar-random `|ψ⟩` in dimension `N`, the fidelity
//! is Beta(1, N−1) distributed, so `P[fid ≥ θ] = (1−θ)^{N−1}` exactly. The
//! looser bound `(s/(s+1))^{N−1}` with `s = 1/θ` comes from dominating the
//! fidelity by a scaled F(2, 2N−2) ratio. Both are kept, and reported
//! separately.

mod beta;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use beta::{f_distribution_cdf, integrate, regularized_incomplete_beta, BetaFnAccumulator};

use crate::error::{Error, Result};
use crate::rng::{count_trials, normal_pair, SeededRng};
use crate::statevec::{check_qubits, fidelity, StateVector, MAX_QUBITS};
use crate::stats::Proportion;

/// A tail query: dimension `N = 2^m` and fidelity threshold `θ ∈ (0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailLawParams {
    pub num_qubits: usize,
    pub threshold: f64,
}

impl TailLawParams {
    pub fn new(num_qubits: usize, threshold: f64) -> Result<Self> {
        check_qubits(num_qubits, MAX_QUBITS)?;
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(Error::InvalidParams(format!("threshold {threshold} is outside (0, 1]")));
        }
        Ok(Self { num_qubits, threshold })
    }

    pub fn from_reciprocal(num_qubits: usize, s: f64) -> Result<Self> {
        Self::new(num_qubits, 1.0 / s)
    }

    pub fn dim(&self) -> u64 {
        1 << self.num_qubits
    }

    pub fn reciprocal(&self) -> f64 {
        1.0 / self.threshold
    }

    pub fn exact(&self) -> f64 {
        exact_haar_tail(self.threshold, self.dim())
    }

    pub fn bound(&self) -> f64 {
        haar_tail_bound(self.reciprocal(), self.dim())
    }
}

/// Draws a Haar-random pure state from normalized complex Gaussian amplitudes.
pub fn sample_haar<R: Rng + ?Sized>(num_qubits: usize, rng: &mut R) -> Result<StateVector> {
    check_qubits(num_qubits, MAX_QUBITS)?;
    let amplitudes = (0..1usize << num_qubits)
        .map(|_| {
            let (re, im) = normal_pair(rng);
            Complex64::new(re, im)
        })
        .collect();
    StateVector::normalized(amplitudes)
}

/// ln of `(s/(s+1))^{N−1}`.
pub fn ln_haar_tail_bound(s: f64, dim: u64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    -((dim - 1) as f64) * (1.0 / s).ln_1p()
}

/// `(s/(s+1))^{N−1}`, an upper bound on `P[fid ≥ 1/s]`. Non-positive `s`
/// returns the trivial bound 1.
pub fn haar_tail_bound(s: f64, dim: u64) -> f64 {
    ln_haar_tail_bound(s, dim).exp()
}

/// `(1−θ)^{N−1}`, the exact probability that a Haar state has fidelity at
/// least `θ` with a fixed state.
pub fn exact_haar_tail(threshold: f64, dim: u64) -> f64 {
    if threshold <= 0.0 {
        return 1.0;
    }
    if threshold >= 1.0 {
        return 0.0;
    }
    ((dim - 1) as f64 * (-threshold).ln_1p()).exp()
}

/// Number of Haar samples whose fidelity with `reference` is at least
/// `threshold`, as a [`Proportion`].
pub fn empirical_tail_count(
    num_qubits: usize,
    reference: &StateVector,
    threshold: f64,
    trials: u64,
    rng: &mut SeededRng,
) -> Result<Proportion> {
    if trials == 0 {
        return Err(Error::InvalidParams("need at least one trial".into()));
    }
    if reference.num_qubits() != num_qubits {
        return Err(Error::InvalidInput(format!(
            "reference has {} qubits, expected {num_qubits}",
            reference.num_qubits()
        )));
    }
    check_qubits(num_qubits, MAX_QUBITS)?;
    let seed: u64 = rng.random();
    let hits = count_trials(trials as usize, seed, |rng| {
        let psi = sample_haar(num_qubits, rng).expect("validated size");
        fidelity(reference, &psi).expect("validated size") >= threshold
    });
    Ok(Proportion::new(hits, trials))
}

/// Fraction of Haar samples with fidelity at least `threshold` against `reference`.
pub fn empirical_tail(
    num_qubits: usize,
    reference: &StateVector,
    threshold: f64,
    trials: u64,
    rng: &mut SeededRng,
) -> Result<f64> {
    empirical_tail_count(num_qubits, reference, threshold, trials, rng).map(|p| p.estimate())
}

/// A χ²(k) draw as a sum of `k` squared standard normals.
pub fn sample_chi_squared<R: Rng + ?Sized>(dof: u32, rng: &mut R) -> f64 {
    let mut sum = 0.0;
    let mut left = dof;
    while left >= 2 {
        let (x, y) = normal_pair(rng);
        sum += x * x + y * y;
        left -= 2;
    }
    if left == 1 {
        let (x, _) = normal_pair(rng);
        sum += x * x;
    }
    sum
}

/// `(χ²(a)/a) / (χ²(b)/b)`, an F(a, b) draw.
pub fn sample_f_ratio<R: Rng + ?Sized>(a: u32, b: u32, rng: &mut R) -> f64 {
    let num = sample_chi_squared(a, rng) / f64::from(a);
    let den = sample_chi_squared(b, rng) / f64::from(b);
    num / den
}
