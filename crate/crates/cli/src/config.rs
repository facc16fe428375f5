//! Versioned JSON experiment configurations.

use std::path::Path;

use prslab_core::designstats::DesignMode;
use prslab_core::generators::FamilyKind;
use prslab_core::puzzles::{ConditionalOracle, PuzzleDescriptor, PuzzleFamily};
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub seed: u64,
    pub trials: u64,
    pub experiment: Experiment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    HaarTail(HaarTailParams),
    Reduction(ReductionParams),
    PuzzleAttack(PuzzleAttackParams),
    DesignQuality(DesignQualityParams),
    DeltaTable(DeltaTableParams),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::HaarTail(_) => "haar-tail",
            Experiment::Reduction(_) => "reduction",
            Experiment::PuzzleAttack(_) => "puzzle-attack",
            Experiment::DesignQuality(_) => "design-quality",
            Experiment::DeltaTable(_) => "delta-table",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HaarTailParams {
    pub qubits: Vec<usize>,
    pub thresholds: Vec<f64>,
}

impl Default for HaarTailParams {
    fn default() -> Self {
        Self { qubits: vec![1, 2, 3, 4, 6], thresholds: vec![0.1, 0.25, 0.5] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InverterKind {
    BruteForce,
    MeasureAndMatch,
    RandomGuess,
}

impl InverterKind {
    pub fn name(&self) -> &'static str {
        match self {
            InverterKind::BruteForce => "brute-force",
            InverterKind::MeasureAndMatch => "measure-and-match",
            InverterKind::RandomGuess => "random-guess",
        }
    }
}

impl std::str::FromStr for InverterKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        [InverterKind::BruteForce, InverterKind::MeasureAndMatch, InverterKind::RandomGuess]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown inverter '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub n: usize,
    pub m: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionParams {
    pub family: FamilyKind,
    pub family_seed: u64,
    pub cells: Vec<Cell>,
    pub copies: Vec<usize>,
    pub f_values: Vec<f64>,
    pub inverter: InverterKind,
}

impl Default for ReductionParams {
    fn default() -> Self {
        Self {
            family: FamilyKind::Lookup,
            family_seed: 1,
            cells: vec![Cell { n: 4, m: 6 }, Cell { n: 6, m: 8 }, Cell { n: 8, m: 10 }],
            copies: vec![1, 2],
            f_values: vec![1.0, 2.0, 4.0, 8.0],
            inverter: InverterKind::BruteForce,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PuzzleAttackParams {
    pub puzzles: Vec<PuzzleDescriptor>,
    pub oracle: ConditionalOracle,
}

impl Default for PuzzleAttackParams {
    fn default() -> Self {
        Self {
            puzzles: vec![PuzzleDescriptor { family: PuzzleFamily::Parity, n: 3, seed: 0 }],
            oracle: ConditionalOracle::Exact,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignQualityParams {
    pub family: FamilyKind,
    pub family_seed: u64,
    pub n: usize,
    pub m: usize,
    pub t: usize,
    pub mode: DesignMode,
}

impl Default for DesignQualityParams {
    fn default() -> Self {
        Self { family: FamilyKind::Lookup, family_seed: 1, n: 6, m: 2, t: 1, mode: DesignMode::ExactOverKeys }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaTableParams {
    pub n_values: Vec<u32>,
    pub m_values: Vec<u32>,
    pub f_values: Vec<f64>,
}

impl Default for DeltaTableParams {
    fn default() -> Self {
        Self { n_values: (2..=8).collect(), m_values: (2..=12).collect(), f_values: vec![2.0] }
    }
}

impl ExperimentConfig {
    pub fn new(seed: u64, trials: u64, experiment: Experiment) -> Self {
        Self { version: CONFIG_VERSION, seed, trials, experiment }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(CliError::Config(format!(
                "schema version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.trials == 0 {
            return Err(CliError::Config("trials must be positive".into()));
        }
        let empty = match &self.experiment {
            Experiment::HaarTail(p) => p.qubits.is_empty() || p.thresholds.is_empty(),
            Experiment::Reduction(p) => p.cells.is_empty() || p.copies.is_empty() || p.f_values.is_empty(),
            Experiment::PuzzleAttack(p) => p.puzzles.is_empty(),
            Experiment::DesignQuality(_) => false,
            Experiment::DeltaTable(p) => p.n_values.is_empty() || p.m_values.is_empty() || p.f_values.is_empty(),
        };
        if empty {
            return Err(CliError::Config(format!("{} sweep has an empty axis", self.experiment.name())));
        }
        Ok(())
    }
}
