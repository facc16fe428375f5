//! Keyed state-generator families `k ↦ |φ_k⟩` with `n`-bit keys and
//! `m`-qubit outputs.
//!
//! All per-key randomness is derived from the family seed and the key, so
//! evaluating a key is a pure function.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::Bitstring;
use crate::error::{Error, Result};
use crate::haarstats::sample_haar;
use crate::rng::{mix_seed, stream, SeededRng};
use crate::statevec::{apply_circuit, check_qubits, fidelity, Circuit, StateVector, MAX_QUBITS};

/// Largest key length accepted by enumeration-based inverters.
pub const MAX_ENUMERATED_KEY_BITS: usize = 16;
/// Cap on `2^n · 2^m` for a fully enumerated key table.
pub const MAX_TABLE_LOG_AMPLITUDES: usize = 24;

const PHASE_SALT: u64 = 0x0070_6861_7365;
const ROTATION_SALT: u64 = 0x726f_7461_7465;
const CIRCUIT_SALT: u64 = 0x6369_7263;
const LOOKUP_SALT: u64 = 0x6c6f_6f6b;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    /// Every key maps to |0…0⟩.
    Constant,
    /// Binary phase states `Σ_x (−1)^{f_k(x)} |x⟩ / √2^m`.
    Phase,
    /// Product of single-qubit rotations, one key chunk per qubit.
    Rotation,
    /// A seeded random Clifford+T circuit per key, applied to |0…0⟩.
    Circuit,
    /// An explicit table of per-key Haar-random states.
    Lookup,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 5] =
        [FamilyKind::Constant, FamilyKind::Phase, FamilyKind::Rotation, FamilyKind::Circuit, FamilyKind::Lookup];

    pub fn name(&self) -> &'static str {
        match self {
            FamilyKind::Constant => "constant",
            FamilyKind::Phase => "phase",
            FamilyKind::Rotation => "rotation",
            FamilyKind::Circuit => "circuit",
            FamilyKind::Lookup => "lookup",
        }
    }
}

impl std::str::FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FamilyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown family '{s}'")))
    }
}

/// A keyed family, serialized as `{kind, n, m, seed}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyedStateGenerator {
    pub kind: FamilyKind,
    #[serde(rename = "n")]
    key_bits: usize,
    #[serde(rename = "m")]
    output_qubits: usize,
    #[serde(default)]
    seed: u64,
}

impl KeyedStateGenerator {
    pub fn new(kind: FamilyKind, key_bits: usize, output_qubits: usize, seed: u64) -> Result<Self> {
        let gen = Self { kind, key_bits, output_qubits, seed };
        gen.validate()?;
        Ok(gen)
    }

    /// Checks the geometry, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.key_bits == 0 || self.key_bits > 63 {
            return Err(Error::InvalidParams(format!("key length {} is outside 1..=63", self.key_bits)));
        }
        check_qubits(self.output_qubits, MAX_QUBITS)
    }

    pub fn key_bits(&self) -> usize {
        self.key_bits
    }

    pub fn output_qubits(&self) -> usize {
        self.output_qubits
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_keys(&self) -> u64 {
        1 << self.key_bits
    }

    /// |φ_k⟩.
    pub fn evaluate(&self, key: &Bitstring) -> Result<StateVector> {
        if key.len() != self.key_bits {
            return Err(Error::InvalidKey(format!("expected {} key bits, got {}", self.key_bits, key.len())));
        }
        self.evaluate_value(key.value())
    }

    /// |φ_k⟩ for the key with integer value `key`.
    pub fn evaluate_value(&self, key: u64) -> Result<StateVector> {
        if key >= self.num_keys() {
            return Err(Error::InvalidKey(format!("key {key} needs more than {} bits", self.key_bits)));
        }
        let m = self.output_qubits;
        match self.kind {
            FamilyKind::Constant => StateVector::zero(m),
            FamilyKind::Phase => self.phase_state(key),
            FamilyKind::Rotation => self.rotation_state(key),
            FamilyKind::Circuit => {
                let mut rng = stream(mix_seed(self.seed, CIRCUIT_SALT), key);
                let circuit = Circuit::random(m, 6 * m, false, &mut rng)?;
                apply_circuit(&StateVector::zero(m)?, &circuit)
            }
            FamilyKind::Lookup => sample_haar(m, &mut stream(mix_seed(self.seed, LOOKUP_SALT), key)),
        }
    }

    fn key_bit(&self, key: u64, i: usize) -> bool {
        (key >> (self.key_bits - 1 - i)) & 1 == 1
    }

    // f_k(x) = ⟨k_{<m}, x⟩ ⊕ Q_0(x) ⊕ ⊕_{j ≥ m, k_j = 1} Q_j(x). Q_0 is purely
    // quadratic so one-qubit, one-bit keys give exactly |+⟩ and |−⟩.
    fn phase_state(&self, key: u64) -> Result<StateVector> {
        let m = self.output_qubits;
        let mut form = BooleanForm::random(m, false, &mut stream(mix_seed(self.seed, PHASE_SALT), 0));
        for i in 0..self.key_bits.min(m) {
            if self.key_bit(key, i) {
                form.linear ^= 1 << i;
            }
        }
        for j in m..self.key_bits {
            if self.key_bit(key, j) {
                let extra = BooleanForm::random(m, true, &mut stream(mix_seed(self.seed, PHASE_SALT), j as u64 + 1));
                form.xor_assign(&extra);
            }
        }
        let amp = (1u64 << m) as f64;
        let amp = 1.0 / amp.sqrt();
        let amplitudes = (0..1usize << m).map(|x| Complex64::new(if form.eval(x) { -amp } else { amp }, 0.0)).collect();
        StateVector::normalized(amplitudes)
    }

    // Qubit j reads the key bits i ≡ j (mod m) as a chunk value c and is
    // rotated to polar angle π(c + u_j)/2^L with a seeded azimuth.
    fn rotation_state(&self, key: u64) -> Result<StateVector> {
        let m = self.output_qubits;
        let mut rng = stream(mix_seed(self.seed, ROTATION_SALT), 0);
        let mut state: Option<StateVector> = None;
        for j in 0..m {
            let chunk: Vec<bool> = (j..self.key_bits).step_by(m).map(|i| self.key_bit(key, i)).collect();
            let value = Bitstring::new(chunk.clone()).value() as f64;
            let levels = (1u64 << chunk.len()) as f64;
            let offset: f64 = rng.random();
            let azimuth: f64 = TAU * rng.random::<f64>();
            let polar = PI * (value + offset) / levels;
            let qubit = StateVector::normalized(vec![
                Complex64::new((0.5 * polar).cos(), 0.0),
                Complex64::from_polar((0.5 * polar).sin(), azimuth),
            ])?;
            state = Some(match state {
                None => qubit,
                Some(s) => s.tensor(&qubit)?,
            });
        }
        Ok(state.expect("m ≥ 1"))
    }

    /// All `2^n` output states, indexed by key value.
    pub fn enumerate(&self) -> Result<Vec<StateVector>> {
        if self.key_bits > MAX_ENUMERATED_KEY_BITS {
            return Err(Error::TooManyKeys { key_bits: self.key_bits, limit: MAX_ENUMERATED_KEY_BITS });
        }
        if self.key_bits + self.output_qubits > MAX_TABLE_LOG_AMPLITUDES {
            return Err(Error::DimensionTooLarge {
                qubits: self.key_bits + self.output_qubits,
                cap: MAX_TABLE_LOG_AMPLITUDES,
            });
        }
        (0..self.num_keys()).map(|k| self.evaluate_value(k)).collect()
    }

    /// Largest pairwise fidelity between distinct keys.
    pub fn max_collision_fidelity(&self) -> Result<f64> {
        let table = self.enumerate()?;
        let mut worst: f64 = 0.0;
        for i in 0..table.len() {
            for j in i + 1..table.len() {
                worst = worst.max(fidelity(&table[i], &table[j])?);
            }
        }
        Ok(worst)
    }
}

/// `f(x) = ⟨linear, x⟩ ⊕ ⊕_i x_i ⟨rows_i, x⟩` over GF(2); `rows_i` only has bits above `i`.
#[derive(Clone, Debug)]
struct BooleanForm {
    linear: usize,
    rows: Vec<usize>,
}

impl BooleanForm {
    fn random(m: usize, with_linear: bool, rng: &mut SeededRng) -> Self {
        let width_mask = (1usize << m) - 1;
        let linear = if with_linear { rng.random::<u64>() as usize & width_mask } else { 0 };
        let rows = (0..m).map(|i| (rng.random::<u64>() as usize) & width_mask & !((2usize << i) - 1)).collect();
        Self { linear, rows }
    }

    fn xor_assign(&mut self, other: &BooleanForm) {
        self.linear ^= other.linear;
        for (a, b) in self.rows.iter_mut().zip(&other.rows) {
            *a ^= b;
        }
    }

    fn eval(&self, x: usize) -> bool {
        let mut bit = (self.linear & x).count_ones() & 1;
        for (i, row) in self.rows.iter().enumerate() {
            if (x >> i) & 1 == 1 {
                bit ^= (row & x).count_ones() & 1;
            }
        }
        bit == 1
    }
}

/// `n`, `m`, copy count `t` and the security parameter `λ` (= `n` unless set).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorGeometry {
    pub n: usize,
    pub m: usize,
    pub t: usize,
    pub lambda: usize,
}

impl GeneratorGeometry {
    pub fn new(n: usize, m: usize, t: usize) -> Result<Self> {
        if n == 0 || m == 0 || t == 0 {
            return Err(Error::InvalidParams(format!("geometry needs n, m, t ≥ 1, got ({n}, {m}, {t})")));
        }
        Ok(Self { n, m, t, lambda: n })
    }
}

/// `state^{⊗t}`, materialized densely.
pub fn tensor_copies(state: &StateVector, t: usize) -> Result<StateVector> {
    state.tensor_power(t)
}

/// `t` copies of one pure state. The product structure is kept symbolic, so
/// a register may exceed the dense tensor cap as long as nobody
/// materializes it.
#[derive(Clone, Debug, PartialEq)]
pub struct CopyRegister {
    single: StateVector,
    copies: usize,
}

impl CopyRegister {
    pub fn new(single: StateVector, copies: usize) -> Result<Self> {
        if copies == 0 {
            return Err(Error::InvalidParams("a copy register needs at least one copy".into()));
        }
        Ok(Self { single, copies })
    }

    pub fn copies(&self) -> usize {
        self.copies
    }

    /// The first copy.
    pub fn single(&self) -> &StateVector {
        &self.single
    }

    pub fn materialize(&self) -> Result<StateVector> {
        tensor_copies(&self.single, self.copies)
    }

    /// Splits off the last copy, leaving a register of `t − 1` copies.
    pub fn split_last(self) -> Result<(CopyRegister, StateVector)> {
        if self.copies < 2 {
            return Err(Error::InvalidParams("need at least two copies to split one off".into()));
        }
        let last = self.single.clone();
        Ok((CopyRegister { single: self.single, copies: self.copies - 1 }, last))
    }
}

/// An algorithm that, given copies of |φ_k⟩, guesses a key.
pub trait Inverter: Sync {
    fn name(&self) -> &'static str;
    fn invert(&self, copies: &CopyRegister, rng: &mut SeededRng) -> Result<Bitstring>;
}

/// Exhaustive search for the key whose state has the largest fidelity with
/// the first copy; ties go to the smallest key.
#[derive(Clone, Debug)]
pub struct BruteForceInverter {
    key_bits: usize,
    table: Vec<StateVector>,
}

/// Fidelities closer than this count as ties.
const TIE_TOLERANCE: f64 = 1e-12;

impl BruteForceInverter {
    pub fn new(gen: &KeyedStateGenerator) -> Result<Self> {
        Ok(Self { key_bits: gen.key_bits(), table: gen.enumerate()? })
    }

    pub fn table(&self) -> &[StateVector] {
        &self.table
    }

    /// `(key value, fidelity)` of the best match for `state`.
    pub fn best_match(&self, state: &StateVector) -> Result<(u64, f64)> {
        let mut best = (0u64, f64::NEG_INFINITY);
        for (k, candidate) in self.table.iter().enumerate() {
            let f = fidelity(candidate, state)?;
            if f > best.1 + TIE_TOLERANCE {
                best = (k as u64, f);
            }
        }
        Ok(best)
    }
}

impl Inverter for BruteForceInverter {
    fn name(&self) -> &'static str {
        "brute-force"
    }

    fn invert(&self, copies: &CopyRegister, _rng: &mut SeededRng) -> Result<Bitstring> {
        let (k, _) = self.best_match(copies.single())?;
        Ok(Bitstring::from_value(k, self.key_bits))
    }
}

/// One-shot brute-force inversion; builds the key table on every call.
pub fn brute_force_inverter(gen: &KeyedStateGenerator, copies: &CopyRegister) -> Result<Bitstring> {
    let inverter = BruteForceInverter::new(gen)?;
    let (k, _) = inverter.best_match(copies.single())?;
    Ok(Bitstring::from_value(k, gen.key_bits()))
}
