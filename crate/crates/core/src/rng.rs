//! Seeded randomness.
//!
//! Every experiment owns one 64-bit seed. Independent workers draw from
//! ChaCha8 streams selected by index, so a result depends only on the seed
//! and the trial index, never on thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type SeededRng = ChaCha8Rng;

/// Trials handled by one stream in [`fold_trials`].
pub const TRIALS_PER_STREAM: usize = 512;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream `index` of the generator keyed by `seed`.
pub fn stream(seed: u64, index: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// SplitMix64 finalizer, used to derive child seeds from a parent seed.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw in (0, 1].
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Two independent standard normals by the Box–Muller transform.
pub fn normal_pair<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64) {
    let u1 = open_unit(rng);
    let u2: f64 = rng.random();
    let radius = (-2.0 * u1.ln()).sqrt();
    let angle = std::f64::consts::TAU * u2;
    (radius * angle.cos(), radius * angle.sin())
}

pub fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    rng.random::<f64>() < p
}

/// Runs `trials` independent trials in chunks of [`TRIALS_PER_STREAM`],
/// each chunk on its own stream of `seed`. Chunk accumulators are merged in
/// chunk order, so the result is independent of the worker count.
pub fn fold_trials<A, I, S, M>(trials: usize, seed: u64, init: I, step: S, merge: M) -> A
where
    A: Send,
    I: Fn() -> A + Sync,
    S: Fn(&mut A, &mut SeededRng, usize) + Sync,
    M: Fn(A, A) -> A,
{
    let chunks = trials.div_ceil(TRIALS_PER_STREAM);
    let partials: Vec<A> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = stream(seed, chunk as u64);
            let mut acc = init();
            let start = chunk * TRIALS_PER_STREAM;
            let end = (start + TRIALS_PER_STREAM).min(trials);
            for trial in start..end {
                step(&mut acc, &mut rng, trial);
            }
            acc
        })
        .collect();
    partials.into_iter().fold(init(), merge)
}

/// Number of trials for which `accept` returns true.
pub fn count_trials<F>(trials: usize, seed: u64, accept: F) -> u64
where
    F: Fn(&mut SeededRng) -> bool + Sync,
{
    fold_trials(
        trials,
        seed,
        || 0u64,
        |acc, rng, _| {
            if accept(rng) {
                *acc += 1;
            }
        },
        |a, b| a + b,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| stream(7, 3).random()).collect();
        let mut s = stream(7, 3);
        let b: Vec<u64> = (0..4).map(|_| s.random()).collect();
        assert_eq!(a[0], b[0]);
        let mut other = stream(7, 4);
        assert_ne!(b[0], other.random::<u64>());
    }

    #[test]
    fn fold_is_chunk_order_deterministic() {
        let run = || {
            fold_trials(
                2000,
                11,
                Vec::new,
                |v, rng, i| v.push((i, rng.random::<u32>())),
                |mut a, b| {
                    a.extend(b);
                    a
                },
            )
        };
        let first = run();
        assert_eq!(first.len(), 2000);
        assert!(first.windows(2).all(|w| w[0].0 + 1 == w[1].0));
        assert_eq!(first, run());
    }

    #[test]
    fn box_muller_moments() {
        let mut rng = seeded(1);
        let n = 200_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n / 2 {
            let (a, b) = normal_pair(&mut rng);
            sum += a + b;
            sq += a * a + b * b;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }
}
