//! Small estimators shared by the experiments.

use std::collections::BTreeMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

/// A Bernoulli frequency with its 3σ binomial half-width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
}

impl Proportion {
    pub fn new(successes: u64, trials: u64) -> Self {
        assert!(trials > 0 && successes <= trials);
        Self { successes, trials }
    }

    pub fn estimate(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }

    /// Standard error of the estimate under a known success probability `p`.
    pub fn sigma_at(&self, p: f64) -> f64 {
        (p.clamp(0.0, 1.0) * (1.0 - p.clamp(0.0, 1.0)) / self.trials as f64).sqrt()
    }

    /// Plug-in 3σ half-width, floored at the resolution of one trial so a
    /// frequency of exactly 0 or 1 still carries a nonzero interval.
    pub fn three_sigma(&self) -> f64 {
        (3.0 * self.sigma_at(self.estimate())).max(1.0 / self.trials as f64)
    }

    /// `|estimate − p| ≤ 3σ(p)`, with σ taken at the hypothesised `p`.
    pub fn consistent_with(&self, p: f64) -> bool {
        let slack = (3.0 * self.sigma_at(p)).max(1.0 / self.trials as f64);
        (self.estimate() - p).abs() <= slack
    }
}

/// Running mean and variance (Welford), mergeable across workers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub count: u64,
    mean: f64,
    m2: f64,
}

impl MeanEstimate {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(self, other: MeanEstimate) -> MeanEstimate {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / count as f64;
        let m2 = self.m2 + other.m2 + delta * delta * (self.count as f64 * other.count as f64) / count as f64;
        MeanEstimate { count, mean, m2 }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std_error(&self) -> f64 {
        if self.count < 2 {
            return f64::INFINITY;
        }
        (self.m2 / (self.count - 1) as f64 / self.count as f64).sqrt()
    }
}

/// Half the ℓ₁ distance between two finitely supported distributions.
pub fn total_variation<K: Ord>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> f64 {
    let mut sum = 0.0;
    for (k, pa) in a {
        sum += (pa - b.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, pb) in b {
        if !a.contains_key(k) {
            sum += pb.abs();
        }
    }
    0.5 * sum
}

/// Normalized frequency table of `samples`.
pub fn empirical<K: Ord + Clone + Hash>(samples: impl IntoIterator<Item = K>) -> BTreeMap<K, f64> {
    let mut counts: BTreeMap<K, u64> = BTreeMap::new();
    let mut total = 0u64;
    for s in samples {
        *counts.entry(s).or_default() += 1;
        total += 1;
    }
    counts.into_iter().map(|(k, c)| (k, c as f64 / total as f64)).collect()
}

/// Upper bound on the expected TVD between a distribution and the empirical
/// distribution of `draws` samples from it: ½ Σ √(p(1−p)/draws).
pub fn empirical_tvd_error(dist: &BTreeMap<impl Ord, f64>, draws: u64) -> f64 {
    0.5 * dist.values().map(|&p| (p * (1.0 - p) / draws as f64).sqrt()).sum::<f64>()
}

/// One-sample Kolmogorov–Smirnov statistic sup |F_n − F|.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(|a, b| a.total_cmp(b));
    let n = samples.len() as f64;
    samples.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs())
    })
}

/// Least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}
