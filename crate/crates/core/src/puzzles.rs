//! One-way puzzles given as sampler circuits, and the postselection attack
//! that re-keys them.
//!
//! A sampler is a measurement-free circuit run on |0…0⟩ whose key and puzzle
//! registers are measured at the end; any other qubits are discarded
//! workspace. The attack samples a key for a given puzzle bit by bit, each
//! bit from an estimate of its probability conditioned on the puzzle and the
//! bits drawn so far.

use std::collections::{BTreeMap, HashMap};
use std::sync::RwLock;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::bits::Bitstring;
use crate::error::{Error, Result};
use crate::rng::{bernoulli, fold_trials, mix_seed, seeded, SeededRng};
use crate::statevec::{apply_circuit, postselect, Circuit, Gate, OutcomeSampler, StateVector, ZERO_PROBABILITY};
use crate::stats::{total_variation, Proportion};

/// Largest key length for which conditionals are enumerated exactly.
pub const MAX_PUZZLE_KEY_BITS: usize = 12;
/// Default probability that any threshold query of one key-sampling run
/// misses its accuracy guarantee.
pub const DEFAULT_FAILURE_BUDGET: f64 = 0.01;

/// Accepts `(k, s)` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum Verifier {
    KeyEqualsPuzzle,
    /// `s` is the parity of `k`.
    Parity,
    /// `s = table[k]`.
    Function {
        table: Vec<u64>,
    },
    /// `(k, s)` has positive probability under the sampler.
    SamplerSupport,
}

/// Shipped sampler families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PuzzleFamily {
    /// `s = k`.
    Copy,
    /// `s = k₁ ⊕ … ⊕ k_n`.
    Parity,
    /// `s = h(k)` for a seeded random surjection onto `n − 1` bits.
    HashTable,
    /// Key and puzzle registers entangled by a seeded random circuit.
    RandomCircuit,
}

impl PuzzleFamily {
    pub const ALL: [PuzzleFamily; 4] =
        [PuzzleFamily::Copy, PuzzleFamily::Parity, PuzzleFamily::HashTable, PuzzleFamily::RandomCircuit];

    pub fn name(&self) -> &'static str {
        match self {
            PuzzleFamily::Copy => "copy",
            PuzzleFamily::Parity => "parity",
            PuzzleFamily::HashTable => "hash-table",
            PuzzleFamily::RandomCircuit => "random-circuit",
        }
    }
}

impl std::str::FromStr for PuzzleFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PuzzleFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown puzzle family '{s}'")))
    }
}

/// Serializable `{family, n, seed}` description of a shipped puzzle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PuzzleDescriptor {
    pub family: PuzzleFamily,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
}

impl PuzzleDescriptor {
    pub fn build(&self) -> Result<OneWayPuzzle> {
        match self.family {
            PuzzleFamily::Copy => OneWayPuzzle::copy(self.n),
            PuzzleFamily::Parity => OneWayPuzzle::parity(self.n),
            PuzzleFamily::HashTable => OneWayPuzzle::hash_table(self.n, self.seed),
            PuzzleFamily::RandomCircuit => OneWayPuzzle::random_circuit(self.n, self.seed),
        }
    }
}

#[derive(Debug)]
pub struct OneWayPuzzle {
    name: String,
    sampler: Circuit,
    key_qubits: Vec<usize>,
    puzzle_qubits: Vec<usize>,
    verifier: Verifier,
    output: StateVector,
    outcomes: OutcomeSampler,
    conditionals: RwLock<HashMap<(Bitstring, Bitstring), f64>>,
}

impl OneWayPuzzle {
    /// Key bit `i` is read from `key_qubits[i]`, puzzle bit `j` from
    /// `puzzle_qubits[j]`.
    pub fn new(
        name: impl Into<String>,
        sampler: Circuit,
        key_qubits: Vec<usize>,
        puzzle_qubits: Vec<usize>,
        verifier: Verifier,
    ) -> Result<Self> {
        let n = key_qubits.len();
        if n == 0 || n > MAX_PUZZLE_KEY_BITS {
            return Err(Error::InvalidParams(format!("key register of {n} bits is outside 1..={MAX_PUZZLE_KEY_BITS}")));
        }
        if puzzle_qubits.is_empty() {
            return Err(Error::InvalidParams("puzzle register is empty".into()));
        }
        let mut seen = vec![false; sampler.num_qubits()];
        for &q in key_qubits.iter().chain(&puzzle_qubits) {
            if q >= seen.len() || std::mem::replace(&mut seen[q], true) {
                return Err(Error::InvalidParams(format!("register qubit {q} is out of range or repeated")));
            }
        }
        if let Verifier::Function { table } = &verifier {
            if table.len() != 1 << n {
                return Err(Error::InvalidParams("function table needs one entry per key".into()));
            }
        }
        let output = apply_circuit(&StateVector::zero(sampler.num_qubits())?, &sampler)?;
        let outcomes = OutcomeSampler::new(&output.probabilities());
        Ok(Self {
            name: name.into(),
            sampler,
            key_qubits,
            puzzle_qubits,
            verifier,
            output,
            outcomes,
            conditionals: RwLock::new(HashMap::new()),
        })
    }

    /// Uniform key, puzzle equal to the key.
    pub fn copy(n: usize) -> Result<Self> {
        let mut c = Circuit::new(2 * n)?;
        for i in 0..n {
            c.push(Gate::H { target: i })?;
            c.push(Gate::Cnot { control: i, target: n + i })?;
        }
        Self::new("copy", c, (0..n).collect(), (n..2 * n).collect(), Verifier::KeyEqualsPuzzle)
    }

    /// Uniform key, one-bit puzzle equal to its parity.
    pub fn parity(n: usize) -> Result<Self> {
        let mut c = Circuit::new(n + 1)?;
        for i in 0..n {
            c.push(Gate::H { target: i })?;
            c.push(Gate::Cnot { control: i, target: n })?;
        }
        Self::new("parity", c, (0..n).collect(), vec![n], Verifier::Parity)
    }

    /// Uniform key, puzzle `h(k)` for a seeded surjection `h` onto
    /// `max(n − 1, 1)` bits, compiled into Clifford+T minterm by minterm.
    pub fn hash_table(n: usize, seed: u64) -> Result<Self> {
        if n == 0 || n > MAX_PUZZLE_KEY_BITS {
            return Err(Error::InvalidParams(format!("hash-table puzzle needs 1 ≤ n ≤ {MAX_PUZZLE_KEY_BITS}")));
        }
        let p = (n - 1).max(1);
        let table = random_surjection(n, p, seed);
        let ancillas = n.saturating_sub(1);
        let total = n + p + ancillas;
        let mut c = Circuit::new(total)?;
        for i in 0..n {
            c.push(Gate::H { target: i })?;
        }
        let keys: Vec<usize> = (0..n).collect();
        let anc: Vec<usize> = (n + p..total).collect();
        for (k, &s) in table.iter().enumerate() {
            if s == 0 {
                continue;
            }
            let key = Bitstring::from_value(k as u64, n);
            let flips: Vec<usize> = (0..n).filter(|&i| !key.get(i)).collect();
            for &i in &flips {
                c.push(Gate::X { target: i })?;
            }
            let and_qubit = compute_and(&mut c, &keys, &anc)?;
            for j in 0..p {
                if (s >> (p - 1 - j)) & 1 == 1 {
                    c.push(Gate::Cnot { control: and_qubit, target: n + j })?;
                }
            }
            uncompute_and(&mut c, &keys, &anc)?;
            for &i in &flips {
                c.push(Gate::X { target: i })?;
            }
        }
        Self::new("hash-table", c, keys, (n..n + p).collect(), Verifier::Function { table })
    }

    /// Key register and a `max(n/2, 1)`-bit puzzle register entangled by a
    /// seeded random circuit; verification is membership in the support.
    pub fn random_circuit(n: usize, seed: u64) -> Result<Self> {
        if n == 0 || n > MAX_PUZZLE_KEY_BITS {
            return Err(Error::InvalidParams(format!("random-circuit puzzle needs 1 ≤ n ≤ {MAX_PUZZLE_KEY_BITS}")));
        }
        let p = (n / 2).max(1);
        let total = n + p;
        let mut rng = seeded(mix_seed(seed, 0x7075_7a7a));
        let c = Circuit::random(total, 6 * total, true, &mut rng)?;
        Self::new("random-circuit", c, (0..n).collect(), (n..total).collect(), Verifier::SamplerSupport)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn key_bits(&self) -> usize {
        self.key_qubits.len()
    }

    pub fn puzzle_bits(&self) -> usize {
        self.puzzle_qubits.len()
    }

    pub fn sampler(&self) -> &Circuit {
        &self.sampler
    }

    pub fn verifier(&self) -> &Verifier {
        &self.verifier
    }

    /// Sampler output before the terminal measurement.
    pub fn output_state(&self) -> &StateVector {
        &self.output
    }

    fn split_outcome(&self, x: usize) -> (Bitstring, Bitstring) {
        let read = |qs: &[usize]| Bitstring::new(qs.iter().map(|&q| (x >> q) & 1 == 1).collect());
        (read(&self.key_qubits), read(&self.puzzle_qubits))
    }

    /// Exact `P[k, s]` by summing squared amplitudes over the workspace.
    /// Pairs below [`ZERO_PROBABILITY`] are rounding residue and are dropped.
    pub fn joint_distribution(&self) -> BTreeMap<(Bitstring, Bitstring), f64> {
        let mut joint = BTreeMap::new();
        for (x, a) in self.output.amplitudes().iter().enumerate() {
            let p = a.norm_sqr();
            if p > 0.0 {
                *joint.entry(self.split_outcome(x)).or_insert(0.0) += p;
            }
        }
        joint.retain(|_, p| *p >= ZERO_PROBABILITY);
        joint
    }

    /// Exact `P[s]`.
    pub fn puzzle_distribution(&self) -> BTreeMap<Bitstring, f64> {
        let mut marginal = BTreeMap::new();
        for ((_, s), p) in self.joint_distribution() {
            *marginal.entry(s).or_insert(0.0) += p;
        }
        marginal
    }

    pub fn verify(&self, key: &Bitstring, puzzle: &Bitstring) -> bool {
        if key.len() != self.key_bits() || puzzle.len() != self.puzzle_bits() {
            return false;
        }
        match &self.verifier {
            Verifier::KeyEqualsPuzzle => key == puzzle,
            Verifier::Parity => puzzle.get(0) == key.parity(),
            Verifier::Function { table } => table[key.value() as usize] == puzzle.value(),
            Verifier::SamplerSupport => {
                let qubits: Vec<usize> = self.key_qubits.iter().chain(&self.puzzle_qubits).copied().collect();
                self.output.outcome_probability(&qubits, &key.concat(puzzle)).is_ok_and(|p| p > ZERO_PROBABILITY)
            }
        }
    }

    /// `P[Ver(k, s) = ⊤]` over sampler draws.
    pub fn correctness(&self) -> f64 {
        self.joint_distribution().iter().filter(|((k, s), _)| self.verify(k, s)).map(|(_, p)| p).sum()
    }
}

fn random_surjection(n: usize, p: usize, seed: u64) -> Vec<u64> {
    let mut rng = seeded(mix_seed(seed, 0x6861_7368));
    let keys = 1usize << n;
    let outputs = 1u64 << p;
    let mut order: Vec<usize> = (0..keys).collect();
    for i in (1..keys).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut table = vec![0u64; keys];
    for (rank, &k) in order.iter().enumerate() {
        table[k] = if (rank as u64) < outputs { rank as u64 } else { rng.random_range(0..outputs) };
    }
    table
}

fn t_dagger(c: &mut Circuit, q: usize) -> Result<()> {
    c.push(Gate::T { target: q })?;
    c.push(Gate::S { target: q })?;
    c.push(Gate::Z { target: q })?;
    Ok(())
}

/// Toffoli as H, CNOT, T and T† gates.
pub(crate) fn toffoli(c: &mut Circuit, a: usize, b: usize, target: usize) -> Result<()> {
    c.push(Gate::H { target })?;
    c.push(Gate::Cnot { control: b, target })?;
    t_dagger(c, target)?;
    c.push(Gate::Cnot { control: a, target })?;
    c.push(Gate::T { target })?;
    c.push(Gate::Cnot { control: b, target })?;
    t_dagger(c, target)?;
    c.push(Gate::Cnot { control: a, target })?;
    c.push(Gate::T { target: b })?;
    c.push(Gate::T { target })?;
    c.push(Gate::H { target })?;
    c.push(Gate::Cnot { control: a, target: b })?;
    c.push(Gate::T { target: a })?;
    t_dagger(c, b)?;
    c.push(Gate::Cnot { control: a, target: b })?;
    Ok(())
}

// AND of all `controls` into the last ancilla of a ladder; returns the qubit
// holding the result.
fn compute_and(c: &mut Circuit, controls: &[usize], anc: &[usize]) -> Result<usize> {
    if controls.len() == 1 {
        return Ok(controls[0]);
    }
    toffoli(c, controls[0], controls[1], anc[0])?;
    for j in 2..controls.len() {
        toffoli(c, anc[j - 2], controls[j], anc[j - 1])?;
    }
    Ok(anc[controls.len() - 2])
}

fn uncompute_and(c: &mut Circuit, controls: &[usize], anc: &[usize]) -> Result<()> {
    if controls.len() == 1 {
        return Ok(());
    }
    for j in (2..controls.len()).rev() {
        toffoli(c, anc[j - 2], controls[j], anc[j - 1])?;
    }
    toffoli(c, controls[0], controls[1], anc[0])
}

/// One draw `(k, s)` from the sampler.
pub fn run_sampler(puzzle: &OneWayPuzzle, rng: &mut SeededRng) -> (Bitstring, Bitstring) {
    puzzle.split_outcome(puzzle.outcomes.sample(rng))
}

/// Conditionals this close to 0 or 1 are snapped to the endpoint.
const SNAP: f64 = 1e-12;

/// `P[k_{|prefix|} = 1 | k starts with prefix, s = puzzle_value]`, read off
/// the sampler state after postselecting the prefix and puzzle registers.
pub fn exact_conditional(puzzle: &OneWayPuzzle, prefix: &Bitstring, puzzle_value: &Bitstring) -> Result<f64> {
    let i = prefix.len();
    if i >= puzzle.key_bits() {
        return Err(Error::InvalidInput(format!("prefix of {i} bits leaves no key bit to predict")));
    }
    if puzzle_value.len() != puzzle.puzzle_bits() {
        return Err(Error::InvalidInput(format!(
            "puzzle value has {} bits, expected {}",
            puzzle_value.len(),
            puzzle.puzzle_bits()
        )));
    }
    let cache_key = (prefix.clone(), puzzle_value.clone());
    if let Some(&p) = puzzle.conditionals.read().expect("cache lock").get(&cache_key) {
        return Ok(p);
    }
    let measured: Vec<usize> = puzzle.key_qubits[..i].iter().chain(&puzzle.puzzle_qubits).copied().collect();
    let post = postselect(&puzzle.output, &measured, &prefix.concat(puzzle_value))?;
    // Position of the next key qubit among the unmeasured ones.
    let next = puzzle.key_qubits[i];
    let local = (0..next).filter(|q| !measured.contains(q)).count();
    let mut p = post.residual.outcome_probability(&[local], &Bitstring::new(vec![true]))?;
    if p < SNAP {
        p = 0.0;
    } else if p > 1.0 - SNAP {
        p = 1.0;
    }
    puzzle.conditionals.write().expect("cache lock").insert(cache_key, p);
    Ok(p)
}

/// How key-bit probabilities are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ConditionalOracle {
    /// The postselected probability itself.
    Exact,
    /// Threshold search over the grid `{0, 1/(2n²), …, 1}` with sampled
    /// postselection decisions.
    PpThreshold { failure_budget: f64 },
}

impl ConditionalOracle {
    pub fn pp_default() -> Self {
        ConditionalOracle::PpThreshold { failure_budget: DEFAULT_FAILURE_BUDGET }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ConditionalOracle::Exact => "exact",
            ConditionalOracle::PpThreshold { .. } => "pp-threshold",
        }
    }

    /// Estimate of the next-bit probability.
    pub fn estimate(
        &self,
        puzzle: &OneWayPuzzle,
        prefix: &Bitstring,
        puzzle_value: &Bitstring,
        rng: &mut SeededRng,
    ) -> Result<f64> {
        let p = exact_conditional(puzzle, prefix, puzzle_value)?;
        match *self {
            ConditionalOracle::Exact => Ok(p),
            ConditionalOracle::PpThreshold { failure_budget } => {
                let grid = ThresholdGrid::new(puzzle.key_bits(), failure_budget)?;
                Ok(grid.search(p, rng))
            }
        }
    }
}

/// The threshold grid for `n`-bit keys: points `t/(2n²)` for
/// `t = 0, …, 2n²`, each decided from `r` postselected samples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdGrid {
    pub n: usize,
    pub repetitions: u64,
}

impl ThresholdGrid {
    pub fn new(n: usize, failure_budget: f64) -> Result<Self> {
        if !(failure_budget > 0.0 && failure_budget < 1.0) {
            return Err(Error::InvalidParams(format!("failure budget {failure_budget} is outside (0, 1)")));
        }
        if n == 0 {
            return Err(Error::InvalidParams("grid needs n ≥ 1".into()));
        }
        Ok(Self { n, repetitions: repetitions(n, failure_budget) })
    }

    /// `2n²`.
    pub fn steps(&self) -> u64 {
        2 * (self.n as u64).pow(2)
    }

    pub fn point(&self, t: u64) -> f64 {
        t as f64 / self.steps() as f64
    }

    /// The accuracy guarantee `1/n²`.
    pub fn tolerance(&self) -> f64 {
        1.0 / (self.n as f64).powi(2)
    }

    /// Noise-free decision: accept grid point `t` iff `p > t/(2n²)`.
    pub fn exact_decision(&self, p: f64, t: u64) -> bool {
        p > self.point(t)
    }

    /// Sampled decision: the fraction of ones among `r` measurements of the
    /// postselected bit register must exceed `t/(2n²)`. The count of ones is
    /// drawn directly from Binomial(r, p).
    pub fn sampled_decision(&self, p: f64, t: u64, rng: &mut SeededRng) -> bool {
        let ones = Binomial::new(self.repetitions, p.clamp(0.0, 1.0)).expect("valid binomial").sample(rng);
        // ones / r > t / (2n²), in exact integer arithmetic.
        u128::from(ones) * u128::from(self.steps()) > u128::from(t) * u128::from(self.repetitions)
    }

    /// Returns `t/(2n²)` for the smallest rejected `t`, or 1 if none is.
    pub fn search(&self, p: f64, rng: &mut SeededRng) -> f64 {
        (0..=self.steps()).find(|&t| !self.sampled_decision(p, t, rng)).map_or(1.0, |t| self.point(t))
    }
}

/// `⌈4 n⁴ ln(2 (2n² + 1) n / budget)⌉` samples per grid decision.
pub fn repetitions(n: usize, failure_budget: f64) -> u64 {
    let n = n as f64;
    let queries = (2.0 * n * n + 1.0) * n;
    (4.0 * n.powi(4) * (2.0 * queries / failure_budget).ln()).ceil() as u64
}

/// Threshold-search estimate of the next-bit probability with the default
/// failure budget.
pub fn pp_threshold_estimate(
    puzzle: &OneWayPuzzle,
    prefix: &Bitstring,
    puzzle_value: &Bitstring,
    rng: &mut SeededRng,
) -> Result<f64> {
    ConditionalOracle::pp_default().estimate(puzzle, prefix, puzzle_value, rng)
}

/// Per-bit record of one key-sampling run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HybridTrace {
    pub estimates: Vec<f64>,
    pub exact: Vec<f64>,
    /// Running sum of `|p̃_i − p_i|`.
    pub ledger: Vec<f64>,
}

impl HybridTrace {
    pub fn step_errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.estimates.iter().zip(&self.exact).map(|(a, b)| (a - b).abs())
    }

    pub fn max_step_error(&self) -> f64 {
        self.step_errors().fold(0.0, f64::max)
    }

    pub fn total(&self) -> f64 {
        self.ledger.last().copied().unwrap_or(0.0)
    }

    fn record(&mut self, estimate: f64, exact: f64) {
        let total = self.total() + (estimate - exact).abs();
        self.estimates.push(estimate);
        self.exact.push(exact);
        self.ledger.push(total);
    }
}

fn check_puzzle_value(puzzle: &OneWayPuzzle, puzzle_value: &Bitstring) -> Result<()> {
    let probability = puzzle.output.outcome_probability(&puzzle.puzzle_qubits, puzzle_value)?;
    if probability < ZERO_PROBABILITY {
        return Err(Error::ZeroProbabilityOutcome { probability });
    }
    Ok(())
}

/// Samples a key for `puzzle_value` one bit at a time.
pub fn sample_key(
    puzzle: &OneWayPuzzle,
    puzzle_value: &Bitstring,
    oracle: &ConditionalOracle,
    rng: &mut SeededRng,
) -> Result<(Bitstring, HybridTrace)> {
    check_puzzle_value(puzzle, puzzle_value)?;
    let mut key = Bitstring::empty();
    let mut trace = HybridTrace::default();
    for _ in 0..puzzle.key_bits() {
        let exact = exact_conditional(puzzle, &key, puzzle_value)?;
        let estimate = match oracle {
            ConditionalOracle::Exact => exact,
            other => other.estimate(puzzle, &key, puzzle_value, rng)?,
        };
        trace.record(estimate, exact);
        key.push(bernoulli(rng, estimate));
    }
    Ok((key, trace))
}

/// Exact distribution of keys given a puzzle value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyConditional {
    pub puzzle: Bitstring,
    pub distribution: BTreeMap<Bitstring, f64>,
}

/// `P[k | s = puzzle_value]` by enumerating the sampler's output distribution.
pub fn exact_key_conditional(puzzle: &OneWayPuzzle, puzzle_value: &Bitstring) -> Result<KeyConditional> {
    if puzzle.key_bits() > MAX_PUZZLE_KEY_BITS {
        return Err(Error::TooManyKeys { key_bits: puzzle.key_bits(), limit: MAX_PUZZLE_KEY_BITS });
    }
    let mut distribution = BTreeMap::new();
    let mut total = 0.0;
    for ((k, s), p) in puzzle.joint_distribution() {
        if &s == puzzle_value {
            *distribution.entry(k).or_insert(0.0) += p;
            total += p;
        }
    }
    if total < ZERO_PROBABILITY {
        return Err(Error::ZeroProbabilityOutcome { probability: total });
    }
    distribution.values_mut().for_each(|p| *p /= total);
    Ok(KeyConditional { puzzle: puzzle_value.clone(), distribution })
}

/// Output distribution of the bit-by-bit sampler when the first `i` bits use
/// `estimates` and the rest use the exact conditionals.
fn hybrid_distribution(
    puzzle: &OneWayPuzzle,
    puzzle_value: &Bitstring,
    estimates: &HashMap<Bitstring, f64>,
    i: usize,
) -> Result<BTreeMap<Bitstring, f64>> {
    let n = puzzle.key_bits();
    let mut out = BTreeMap::new();
    let mut frontier = vec![(Bitstring::empty(), 1.0)];
    while let Some((prefix, mass)) = frontier.pop() {
        if prefix.len() == n {
            out.insert(prefix, mass);
            continue;
        }
        let p = if prefix.len() < i { estimates[&prefix] } else { exact_conditional(puzzle, &prefix, puzzle_value)? };
        for (bit, weight) in [(false, 1.0 - p), (true, p)] {
            if weight > 0.0 {
                let mut next = prefix.clone();
                next.push(bit);
                frontier.push((next, mass * weight));
            }
        }
    }
    Ok(out)
}

/// `TVD(D_i, D_{i+1})` for `i = 0, …, n−1`, where `D_i` draws its first `i`
/// key bits from one realization of the oracle's estimates and the rest from
/// the exact conditionals. `D_0` is the exact key conditional and `D_n` the
/// sampler's output distribution.
pub fn hybrid_distances(
    puzzle: &OneWayPuzzle,
    puzzle_value: &Bitstring,
    oracle: &ConditionalOracle,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    check_puzzle_value(puzzle, puzzle_value)?;
    let n = puzzle.key_bits();
    // Estimates at every prefix reachable with positive exact probability;
    // the others have zero estimate as well, so no hybrid reaches them.
    let mut estimates = HashMap::new();
    let mut stack = vec![Bitstring::empty()];
    while let Some(prefix) = stack.pop() {
        if prefix.len() == n {
            continue;
        }
        let p = exact_conditional(puzzle, &prefix, puzzle_value)?;
        estimates.insert(prefix.clone(), oracle.estimate(puzzle, &prefix, puzzle_value, rng)?);
        for (bit, weight) in [(false, 1.0 - p), (true, p)] {
            if weight > 0.0 {
                let mut next = prefix.clone();
                next.push(bit);
                stack.push(next);
            }
        }
    }
    let hybrids =
        (0..=n).map(|i| hybrid_distribution(puzzle, puzzle_value, &estimates, i)).collect::<Result<Vec<_>>>()?;
    Ok(hybrids.windows(2).map(|w| total_variation(&w[0], &w[1])).collect())
}

/// Outcome of [`break_puzzle`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BreakReport {
    pub success: Proportion,
    /// Mean over trials of `Σ_i |p̃_i − p_i|` along the sampled path.
    pub mean_ledger: f64,
    pub max_step_error: f64,
}

impl BreakReport {
    pub fn success_rate(&self) -> f64 {
        self.success.estimate()
    }
}

/// Draws `(k, s)` from the sampler, re-keys `s` with [`sample_key`], and
/// counts how often the verifier accepts.
pub fn break_puzzle(
    puzzle: &OneWayPuzzle,
    trials: u64,
    oracle: &ConditionalOracle,
    rng: &mut SeededRng,
) -> Result<BreakReport> {
    if trials == 0 {
        return Err(Error::InvalidParams("need at least one trial".into()));
    }
    let seed: u64 = rng.random();
    #[derive(Clone, Copy)]
    struct Acc {
        wins: u64,
        ledger: f64,
        worst: f64,
    }
    let acc = fold_trials(
        trials as usize,
        seed,
        || Ok(Acc { wins: 0, ledger: 0.0, worst: 0.0 }),
        |acc: &mut Result<Acc>, rng, _| {
            let Ok(a) = acc else { return };
            let (_, s) = run_sampler(puzzle, rng);
            match sample_key(puzzle, &s, oracle, rng) {
                Ok((key, trace)) => {
                    a.wins += u64::from(puzzle.verify(&key, &s));
                    a.ledger += trace.total();
                    a.worst = a.worst.max(trace.max_step_error());
                }
                Err(e) => *acc = Err(e),
            }
        },
        |a, b| {
            let (a, b) = (a?, b?);
            Ok(Acc { wins: a.wins + b.wins, ledger: a.ledger + b.ledger, worst: a.worst.max(b.worst) })
        },
    )?;
    Ok(BreakReport {
        success: Proportion::new(acc.wins, trials),
        mean_ledger: acc.ledger / trials as f64,
        max_step_error: acc.worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statevec::{bits_of, index_of};
    use crate::stats::empirical;
    use approx::assert_abs_diff_eq;

    fn b(s: &str) -> Bitstring {
        s.parse().unwrap()
    }

    #[test]
    fn toffoli_decomposition_is_exact() {
        for x in 0..8usize {
            let mut c = Circuit::new(3).unwrap();
            toffoli(&mut c, 0, 1, 2).unwrap();
            let out = apply_circuit(&StateVector::basis(&bits_of(x, 3)).unwrap(), &c).unwrap();
            let expected = if x & 3 == 3 { x ^ 4 } else { x };
            assert_abs_diff_eq!(out.amplitudes()[expected].norm_sqr(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(out.amplitudes()[expected].re, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn hash_table_circuit_computes_its_table() {
        for n in 1..=4 {
            let puzzle = OneWayPuzzle::hash_table(n, 3).unwrap();
            let Verifier::Function { table } = puzzle.verifier().clone() else { panic!() };
            let p = puzzle.puzzle_bits();
            // Surjective onto p bits.
            let mut hit = vec![false; 1 << p];
            table.iter().for_each(|&s| hit[s as usize] = true);
            assert!(hit.iter().all(|&h| h), "n = {n}");
            // Joint distribution is uniform over (k, h(k)) and the workspace is clean.
            let joint = puzzle.joint_distribution();
            assert_eq!(joint.len(), 1 << n);
            for ((k, s), prob) in &joint {
                assert_eq!(s.value(), table[k.value() as usize]);
                assert_abs_diff_eq!(*prob, 1.0 / (1 << n) as f64, epsilon = 1e-12);
            }
            assert_abs_diff_eq!(puzzle.correctness(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn shipped_puzzles_are_correct() {
        for family in PuzzleFamily::ALL {
            for n in [1, 3, 4] {
                let puzzle = PuzzleDescriptor { family, n, seed: 5 }.build().unwrap();
                assert_abs_diff_eq!(puzzle.correctness(), 1.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn parity_puzzle_marginal_is_uniform() {
        let puzzle = OneWayPuzzle::parity(2).unwrap();
        let mut rng = seeded(50);
        let ones = (0..100_000).filter(|_| run_sampler(&puzzle, &mut rng).1.get(0)).count();
        assert_abs_diff_eq!(ones as f64 / 1e5, 0.5, epsilon = 0.01);
    }

    #[test]
    fn copy_puzzle_draws_verify() {
        let puzzle = OneWayPuzzle::copy(3).unwrap();
        let mut rng = seeded(51);
        for _ in 0..1000 {
            let (k, s) = run_sampler(&puzzle, &mut rng);
            assert!(puzzle.verify(&k, &s));
        }
    }

    #[test]
    fn bell_sampler_matches_amplitudes() {
        let c = Circuit::from_gates(
            3,
            [
                Gate::H { target: 0 },
                Gate::Cnot { control: 0, target: 1 },
                Gate::T { target: 1 },
                Gate::H { target: 2 },
                Gate::CPhase { control: 2, target: 0, theta: 1.0 },
                Gate::H { target: 2 },
            ],
        )
        .unwrap();
        let puzzle = OneWayPuzzle::new("bell", c, vec![0], vec![1], Verifier::SamplerSupport).unwrap();
        let exact: BTreeMap<(Bitstring, Bitstring), f64> = puzzle.joint_distribution();
        let mut rng = seeded(52);
        let draws = empirical((0..100_000).map(|_| run_sampler(&puzzle, &mut rng)));
        assert!(total_variation(&draws, &exact) < 0.02);
        assert_eq!(exact.len(), 2);
    }

    #[test]
    fn exact_conditional_examples() {
        let parity = OneWayPuzzle::parity(2).unwrap();
        assert_abs_diff_eq!(exact_conditional(&parity, &b("ε"), &b("0")).unwrap(), 0.5, epsilon = 1e-12);
        assert_eq!(exact_conditional(&parity, &b("1"), &b("0")).unwrap(), 1.0);
        assert_eq!(exact_conditional(&parity, &b("0"), &b("0")).unwrap(), 0.0);
        let copy = OneWayPuzzle::copy(2).unwrap();
        assert_eq!(exact_conditional(&copy, &b("ε"), &b("10")).unwrap(), 1.0);
        assert!(matches!(exact_conditional(&copy, &b("0"), &b("10")), Err(Error::ZeroProbabilityOutcome { .. })));
        assert!(matches!(exact_conditional(&copy, &b("01"), &b("01")), Err(Error::InvalidInput(_))));
        assert!(matches!(exact_conditional(&copy, &b(""), &b("0")), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn conditionals_agree_with_enumeration() {
        let puzzle = OneWayPuzzle::random_circuit(4, 9).unwrap();
        for (s, ps) in puzzle.puzzle_distribution() {
            if ps < 1e-9 {
                continue;
            }
            let cond = exact_key_conditional(&puzzle, &s).unwrap();
            for len in 0..4 {
                for v in 0..1u64 << len {
                    let prefix = Bitstring::from_value(v, len);
                    let mass = |bit: Option<bool>| -> f64 {
                        cond.distribution
                            .iter()
                            .filter(|(k, _)| k.prefix(len) == prefix && bit.is_none_or(|bb| k.get(len) == bb))
                            .map(|(_, p)| p)
                            .sum()
                    };
                    let total = mass(None);
                    if total < 1e-9 {
                        continue;
                    }
                    let want = mass(Some(true)) / total;
                    assert_abs_diff_eq!(exact_conditional(&puzzle, &prefix, &s).unwrap(), want, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn threshold_grid_examples() {
        let grid = ThresholdGrid::new(4, DEFAULT_FAILURE_BUDGET).unwrap();
        assert_eq!(grid.steps(), 32);
        let mut rng = seeded(53);
        for _ in 0..200 {
            let est = grid.search(0.5, &mut rng);
            assert!((0.4375..=0.5625).contains(&est), "{est}");
            assert_eq!(grid.search(0.0, &mut rng), 0.0);
            assert_eq!(grid.search(1.0, &mut rng), 1.0);
        }
        assert!(ThresholdGrid::new(4, 0.0).is_err());
    }

    #[test]
    fn repetition_count() {
        // ⌈4·81·ln(2·19·3/0.01)⌉
        let expected = (4.0 * 81.0 * (2.0f64 * 19.0 * 3.0 / 0.01).ln()).ceil() as u64;
        assert_eq!(repetitions(3, 0.01), expected);
        assert_eq!(repetitions(3, 0.01), 3027);
    }

    #[test]
    fn exact_decisions_are_monotone() {
        let grid = ThresholdGrid::new(3, 0.01).unwrap();
        for i in 0..=100 {
            let p = i as f64 / 100.0;
            let decisions: Vec<bool> = (0..=grid.steps()).map(|t| grid.exact_decision(p, t)).collect();
            let first_reject = decisions.iter().position(|d| !d).unwrap();
            assert!(decisions[first_reject..].iter().all(|d| !d));
        }
    }

    #[test]
    fn sample_key_parity_is_uniform_over_conditional() {
        let puzzle = OneWayPuzzle::parity(2).unwrap();
        let mut rng = seeded(54);
        let draws = empirical(
            (0..100_000).map(|_| sample_key(&puzzle, &b("0"), &ConditionalOracle::Exact, &mut rng).unwrap().0),
        );
        let exact = exact_key_conditional(&puzzle, &b("0")).unwrap();
        assert_eq!(exact.distribution.keys().cloned().collect::<Vec<_>>(), vec![b("00"), b("11")]);
        assert!(total_variation(&draws, &exact.distribution) < 0.02);
    }

    #[test]
    fn sample_key_copy_is_deterministic() {
        let puzzle = OneWayPuzzle::copy(3).unwrap();
        let mut rng = seeded(55);
        for oracle in [ConditionalOracle::Exact, ConditionalOracle::pp_default()] {
            for _ in 0..50 {
                let (key, trace) = sample_key(&puzzle, &b("101"), &oracle, &mut rng).unwrap();
                assert_eq!(key, b("101"));
                assert_eq!(trace.total(), 0.0);
            }
        }
        assert!(sample_key(&OneWayPuzzle::parity(2).unwrap(), &b("1"), &ConditionalOracle::Exact, &mut rng).is_ok());
    }

    #[test]
    fn zero_probability_puzzle_is_an_error() {
        let puzzle = OneWayPuzzle::hash_table(3, 1).unwrap();
        let c = Circuit::from_gates(2, [Gate::H { target: 0 }]).unwrap();
        let constant = OneWayPuzzle::new("constant-puzzle", c, vec![0], vec![1], Verifier::SamplerSupport).unwrap();
        let mut rng = seeded(56);
        assert!(matches!(
            sample_key(&constant, &b("1"), &ConditionalOracle::Exact, &mut rng),
            Err(Error::ZeroProbabilityOutcome { .. })
        ));
        assert!(matches!(exact_key_conditional(&constant, &b("1")), Err(Error::ZeroProbabilityOutcome { .. })));
        assert!(sample_key(&puzzle, &b("00"), &ConditionalOracle::Exact, &mut rng).is_ok());
    }

    #[test]
    fn key_conditional_examples() {
        let parity = OneWayPuzzle::parity(2).unwrap();
        let cond = exact_key_conditional(&parity, &b("1")).unwrap();
        assert_eq!(cond.distribution.len(), 2);
        assert_abs_diff_eq!(cond.distribution[&b("01")], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(cond.distribution[&b("10")], 0.5, epsilon = 1e-12);
        let copy = OneWayPuzzle::copy(3).unwrap();
        let cond = exact_key_conditional(&copy, &b("011")).unwrap();
        assert_eq!(cond.distribution.len(), 1);
        assert_abs_diff_eq!(cond.distribution[&b("011")], 1.0, epsilon = 1e-12);
        let rc = OneWayPuzzle::random_circuit(5, 2).unwrap();
        for (s, _) in rc.puzzle_distribution() {
            let total: f64 = exact_key_conditional(&rc, &s).unwrap().distribution.values().sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn exact_hybrids_coincide() {
        let puzzle = OneWayPuzzle::random_circuit(4, 4).unwrap();
        let (s, _) = puzzle.puzzle_distribution().into_iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        let d = hybrid_distances(&puzzle, &s, &ConditionalOracle::Exact, &mut seeded(57)).unwrap();
        assert_eq!(d.len(), 4);
        assert!(d.iter().all(|&x| x < 1e-12));
    }

    #[test]
    fn sampled_hybrids_respect_step_bound() {
        for n in [3, 4] {
            let puzzle = OneWayPuzzle::hash_table(n, 8).unwrap();
            let tol = 1.0 / (n * n) as f64;
            let mut rng = seeded(58);
            for (s, _) in puzzle.puzzle_distribution() {
                let d = hybrid_distances(&puzzle, &s, &ConditionalOracle::pp_default(), &mut rng).unwrap();
                assert!(d.iter().all(|&x| x <= tol + 1e-12), "{d:?}");
                assert!(d.iter().sum::<f64>() <= 1.0 / n as f64 + 1e-12);
            }
        }
    }

    #[test]
    fn sample_key_random_circuit_tvd() {
        let puzzle = OneWayPuzzle::random_circuit(3, 11).unwrap();
        let (s, _) = puzzle.puzzle_distribution().into_iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        let exact = exact_key_conditional(&puzzle, &s).unwrap();
        let mut rng = seeded(59);
        let draws =
            empirical((0..100_000).map(|_| sample_key(&puzzle, &s, &ConditionalOracle::Exact, &mut rng).unwrap().0));
        assert!(total_variation(&draws, &exact.distribution) <= 1.0 / 3.0);
        assert!(total_variation(&draws, &exact.distribution) < 0.02);
    }

    #[test]
    fn break_examples() {
        let mut rng = seeded(60);
        let copy = OneWayPuzzle::copy(3).unwrap();
        assert_eq!(break_puzzle(&copy, 2000, &ConditionalOracle::Exact, &mut rng).unwrap().success_rate(), 1.0);
        let parity = OneWayPuzzle::parity(3).unwrap();
        assert_eq!(break_puzzle(&parity, 2000, &ConditionalOracle::Exact, &mut rng).unwrap().success_rate(), 1.0);
        let rc = OneWayPuzzle::random_circuit(4, 3).unwrap();
        let report = break_puzzle(&rc, 4000, &ConditionalOracle::Exact, &mut rng).unwrap();
        assert!(report.success_rate() >= 0.5 - report.success.three_sigma());
        assert!(break_puzzle(&rc, 0, &ConditionalOracle::Exact, &mut rng).is_err());
    }

    #[test]
    fn pp_break_reports_step_errors_within_tolerance() {
        let puzzle = OneWayPuzzle::hash_table(3, 12).unwrap();
        let report = break_puzzle(&puzzle, 500, &ConditionalOracle::pp_default(), &mut seeded(61)).unwrap();
        assert!(report.max_step_error <= 1.0 / 9.0);
        assert!(report.success_rate() >= 0.5);
    }

    #[test]
    fn basis_indexing_is_consistent() {
        let bits = b("0110");
        assert_eq!(bits_of(index_of(&bits), 4), bits);
    }

    #[test]
    fn descriptor_roundtrip() {
        let d = PuzzleDescriptor { family: PuzzleFamily::HashTable, n: 4, seed: 2 };
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(json, r#"{"family":"hash-table","n":4,"seed":2}"#);
        assert_eq!(serde_json::from_str::<PuzzleDescriptor>(&json).unwrap(), d);
    }
}
