//! Runs one configured experiment and renders its table.

use std::path::Path;
use std::time::Instant;

use prslab_core::designstats::{design_quality, DesignMode};
use prslab_core::generators::{BruteForceInverter, Inverter, KeyedStateGenerator};
use prslab_core::haarstats::{empirical_tail_count, TailLawParams};
use prslab_core::puzzles::{break_puzzle, ConditionalOracle};
use prslab_core::reduction::{
    delta_bound, measure_advantage, weak_output_qubits, DeltaParams, MeasureAndMatchInverter, RandomGuessInverter,
};
use prslab_core::rng::seeded;
use prslab_core::statevec::StateVector;
use serde::{Deserialize, Serialize};

use crate::config::{
    DeltaTableParams, DesignQualityParams, Experiment, ExperimentConfig, HaarTailParams, InverterKind,
    PuzzleAttackParams, ReductionParams,
};
use crate::row;
use crate::table::{num, output_path, write_json, Check, Table};
use crate::Result;

pub const HAAR_TAIL_COLUMNS: &[&str] = &[
    "claim",
    "m",
    "dim",
    "theta",
    "trials",
    "seed",
    "estimate",
    "ci",
    "exact",
    "bound",
    "matches_exact",
    "below_bound",
];
pub const REDUCTION_COLUMNS: &[&str] = &[
    "claim",
    "family",
    "n",
    "m",
    "t",
    "f",
    "trials",
    "seed",
    "inverter",
    "accept_pseudorandom",
    "ci_pseudorandom",
    "accept_haar",
    "ci_haar",
    "advantage",
    "delta",
    "haar_within_bound",
];
pub const ATTACK_COLUMNS: &[&str] = &[
    "claim",
    "family",
    "n",
    "puzzle_seed",
    "oracle",
    "trials",
    "seed",
    "correctness",
    "success",
    "ci",
    "target",
    "mean_tvd",
    "max_step_error",
    "pass",
];
pub const DESIGN_COLUMNS: &[&str] = &["claim", "family", "n", "m", "t", "mode", "samples", "epsilon_hat", "seed"];
pub const DELTA_COLUMNS: &[&str] =
    &["claim", "n", "m", "f", "keys_term", "f_term", "delta", "weak_preset_m", "below_three_quarters"];

/// Table and asserted checks of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub table: Table,
    pub checks: Vec<Check>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: usize,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub wall_clock_seconds: f64,
}

pub fn run(config: &ExperimentConfig) -> Result<Outcome> {
    config.validate()?;
    match &config.experiment {
        Experiment::HaarTail(p) => haar_tail(p, config.trials, config.seed),
        Experiment::Reduction(p) => reduction(p, config.trials, config.seed),
        Experiment::PuzzleAttack(p) => puzzle_attack(p, config.trials, config.seed),
        Experiment::DesignQuality(p) => design(p, config.seed),
        Experiment::DeltaTable(p) => delta_table(p),
    }
}

/// Runs `config` and writes `<kind>.csv` and `<kind>.report.json` into `out`.
pub fn execute(config: &ExperimentConfig, out: &Path) -> Result<ExperimentReport> {
    let start = Instant::now();
    let outcome = run(config)?;
    let stem = config.experiment.name();
    outcome.table.write_csv(&output_path(out, stem, "csv"))?;
    let report = ExperimentReport {
        config: config.clone(),
        rows: outcome.table.rows.len(),
        passed: outcome.checks.iter().all(|c| c.passed),
        checks: outcome.checks,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    write_json(&output_path(out, &format!("{stem}.report"), "json"), &report)?;
    Ok(report)
}

pub fn haar_tail(p: &HaarTailParams, trials: u64, seed: u64) -> Result<Outcome> {
    haar_tail_against(p, trials, seed, TailLawParams::bound)
}

/// The tail sweep with the asserted upper bound supplied by `bound`.
pub fn haar_tail_against(
    p: &HaarTailParams,
    trials: u64,
    seed: u64,
    bound: impl Fn(&TailLawParams) -> f64,
) -> Result<Outcome> {
    let mut rng = seeded(seed);
    let mut table = Table::new(HAAR_TAIL_COLUMNS);
    let mut checks = Vec::new();
    for &m in &p.qubits {
        let reference = StateVector::zero(m)?;
        for &theta in &p.thresholds {
            let law = TailLawParams::new(m, theta)?;
            let (exact, bound) = (law.exact(), bound(&law));
            let count = empirical_tail_count(m, &reference, theta, trials, &mut rng)?;
            let ci = (3.0 * count.sigma_at(exact)).max(1.0 / trials as f64);
            let label = format!("m={m} theta={theta}");
            let matches =
                Check::new("haar-tail", label.clone(), count.estimate(), exact, ci, count.consistent_with(exact));
            let below = Check::at_most("haar-tail", label, count.estimate(), bound, ci);
            table.push(row![
                "haar-tail",
                m,
                law.dim(),
                num(theta),
                trials,
                seed,
                num(count.estimate()),
                num(ci),
                num(exact),
                num(bound),
                matches.passed,
                below.passed
            ]);
            checks.extend([matches, below]);
        }
    }
    Ok(Outcome { table, checks })
}

pub fn build_inverter(kind: InverterKind, gen: &KeyedStateGenerator) -> Result<Box<dyn Inverter>> {
    Ok(match kind {
        InverterKind::BruteForce => Box::new(BruteForceInverter::new(gen)?),
        InverterKind::MeasureAndMatch => Box::new(MeasureAndMatchInverter::new(gen)?),
        InverterKind::RandomGuess => Box::new(RandomGuessInverter { key_bits: gen.key_bits() }),
    })
}

pub fn reduction(p: &ReductionParams, trials: u64, seed: u64) -> Result<Outcome> {
    let mut rng = seeded(seed);
    let mut table = Table::new(REDUCTION_COLUMNS);
    let mut checks = Vec::new();
    for cell in &p.cells {
        let gen = KeyedStateGenerator::new(p.family, cell.n, cell.m, p.family_seed)?;
        let inverter = build_inverter(p.inverter, &gen)?;
        for &t in &p.copies {
            let report = measure_advantage(&gen, inverter.as_ref(), t, trials, &mut rng)?;
            for &f in &p.f_values {
                let delta = delta_bound(&DeltaParams::new(cell.n as u32, cell.m as u32, f)?);
                let check = Check::at_most(
                    "reduction-bound",
                    format!("n={} m={} t={t} f={f}", cell.n, cell.m),
                    report.accept_prob_haar,
                    delta,
                    report.ci_haar,
                );
                table.push(row![
                    "reduction-bound",
                    p.family.name(),
                    cell.n,
                    cell.m,
                    t,
                    num(f),
                    trials,
                    seed,
                    p.inverter.name(),
                    num(report.accept_prob_pseudorandom),
                    num(report.ci_pseudorandom),
                    num(report.accept_prob_haar),
                    num(report.ci_haar),
                    num(report.advantage),
                    num(delta),
                    check.passed
                ]);
                checks.push(check);
            }
        }
    }
    Ok(Outcome { table, checks })
}

/// Success target of the attack: `1 − 2/n` with exact conditionals, `1/2`
/// with the threshold oracle.
pub fn attack_target(oracle: &ConditionalOracle, n: usize) -> f64 {
    match oracle {
        ConditionalOracle::Exact => 1.0 - 2.0 / n as f64,
        ConditionalOracle::PpThreshold { .. } => 0.5,
    }
}

pub fn puzzle_attack(p: &PuzzleAttackParams, trials: u64, seed: u64) -> Result<Outcome> {
    let mut rng = seeded(seed);
    let mut table = Table::new(ATTACK_COLUMNS);
    let mut checks = Vec::new();
    for desc in &p.puzzles {
        let puzzle = desc.build()?;
        let report = break_puzzle(&puzzle, trials, &p.oracle, &mut rng)?;
        let target = attack_target(&p.oracle, desc.n);
        let ci = report.success.three_sigma();
        let check = Check::at_least(
            "attack-success",
            format!("{} n={} {}", desc.family.name(), desc.n, p.oracle.name()),
            report.success_rate(),
            target,
            ci,
        );
        table.push(row![
            "attack-success",
            desc.family.name(),
            desc.n,
            desc.seed,
            p.oracle.name(),
            trials,
            seed,
            num(puzzle.correctness()),
            num(report.success_rate()),
            num(ci),
            num(target),
            num(report.mean_ledger),
            num(report.max_step_error),
            check.passed
        ]);
        checks.push(check);
    }
    Ok(Outcome { table, checks })
}

pub fn design(p: &DesignQualityParams, seed: u64) -> Result<Outcome> {
    let mut rng = seeded(seed);
    let gen = KeyedStateGenerator::new(p.family, p.n, p.m, p.family_seed)?;
    let epsilon = design_quality(&gen, p.t, p.mode, &mut rng)?;
    let samples = match p.mode {
        DesignMode::ExactOverKeys => gen.num_keys(),
        DesignMode::Sampled { samples } => samples,
    };
    let mut table = Table::new(DESIGN_COLUMNS);
    table.push(row!["design-quality", p.family.name(), p.n, p.m, p.t, p.mode.name(), samples, num(epsilon), seed]);
    Ok(Outcome { table, checks: Vec::new() })
}

pub fn delta_table(p: &DeltaTableParams) -> Result<Outcome> {
    let mut table = Table::new(DELTA_COLUMNS);
    for &n in &p.n_values {
        for &m in &p.m_values {
            for &f in &p.f_values {
                let params = DeltaParams::new(n, m, f)?;
                let delta = delta_bound(&params);
                table.push(row![
                    "delta-table",
                    n,
                    m,
                    num(f),
                    num(params.keys_term()),
                    num(params.f_term()),
                    num(delta),
                    m == weak_output_qubits(n),
                    delta < 0.75
                ]);
            }
        }
    }
    Ok(Outcome { table, checks: Vec::new() })
}
