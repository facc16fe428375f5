//! The acceptance battery. Each criterion runs with a seed derived from the
//! suite seed, renders a CSV table, and passes when all of its checks hold
//! within its runtime limit.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use prslab_core::bits::Bitstring;
use prslab_core::designstats::{
    design_chain, design_quality, empirical_moment, haar_moment, trace_distance, DesignMode, HaarSource,
};
use prslab_core::generators::{FamilyKind, KeyedStateGenerator};
use prslab_core::haarstats::{f_distribution_cdf, sample_f_ratio, TailLawParams};
use prslab_core::puzzles::{
    exact_conditional, exact_key_conditional, hybrid_distances, pp_threshold_estimate, run_sampler, sample_key,
    ConditionalOracle, OneWayPuzzle, PuzzleDescriptor, PuzzleFamily,
};
use prslab_core::reduction::{delta_bound, theorem_presets, weak_output_qubits, weak_preset_crossover, Preset};
use prslab_core::rng::{fold_trials, mix_seed, seeded};
use prslab_core::stats::{empirical_tvd_error, ks_statistic, slope, total_variation};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Cell, HaarTailParams, PuzzleAttackParams, ReductionParams};
use crate::experiments::{haar_tail_against, puzzle_attack, reduction};
use crate::row;
use crate::table::{num, output_path, write_json, Check, Table};
use crate::Result;

/// Largest key length tried when locating the weak-preset crossover.
pub const CROSSOVER_SEARCH_LIMIT: u32 = 4096;

/// Trial counts: full scale, or a tenth of it with `quick`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scale {
    pub quick: bool,
}

impl Scale {
    pub const FULL: Scale = Scale { quick: false };
    pub const QUICK: Scale = Scale { quick: true };

    pub fn trials(&self, full: u64) -> u64 {
        if self.quick {
            (full / 10).max(100)
        } else {
            full
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriterionResult {
    pub number: u8,
    pub name: &'static str,
    pub checks_passed: bool,
    pub summary: String,
    pub table: Table,
    pub elapsed_seconds: f64,
    pub limit_seconds: f64,
}

impl CriterionResult {
    pub fn passed(&self) -> bool {
        self.checks_passed && self.elapsed_seconds <= self.limit_seconds
    }

    /// `criterion N (name): PASS|FAIL  summary  [elapsed / limit]`.
    pub fn line(&self) -> String {
        format!(
            "criterion {} ({}): {}  {}  [{:.1}s / {}s]",
            self.number,
            self.name,
            if self.passed() { "PASS" } else { "FAIL" },
            self.summary,
            self.elapsed_seconds,
            self.limit_seconds
        )
    }

    pub fn file_stem(&self) -> String {
        format!("criterion-{}-{}", self.number, self.name)
    }
}

struct Body {
    table: Table,
    checks: Vec<Check>,
    summary: String,
}

fn timed(number: u8, name: &'static str, limit_seconds: f64, body: impl FnOnce() -> Result<Body>) -> CriterionResult {
    let start = Instant::now();
    let outcome = body();
    let elapsed_seconds = start.elapsed().as_secs_f64();
    match outcome {
        Ok(Body { table, checks, summary }) => {
            let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.label.as_str()).collect();
            let summary = if failed.is_empty() {
                format!("{summary}; {} checks hold", checks.len())
            } else {
                format!("{summary}; {} of {} checks fail, first: {}", failed.len(), checks.len(), failed[0])
            };
            CriterionResult {
                number,
                name,
                checks_passed: !checks.is_empty() && failed.is_empty(),
                summary,
                table,
                elapsed_seconds,
                limit_seconds,
            }
        }
        Err(e) => CriterionResult {
            number,
            name,
            checks_passed: false,
            summary: format!("error: {e}"),
            table: Table::default(),
            elapsed_seconds,
            limit_seconds,
        },
    }
}

/// Which upper bound the tail criterion asserts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TailBoundRule {
    /// `(s/(s+1))^{N−1}` with `s = 1/θ`.
    Derived,
    /// A deliberately wrong bound at 90% of the exact law; the criterion
    /// must fail under it.
    TamperedBelowExact,
}

pub fn haar_tail_criterion(seed: u64, scale: Scale, rule: TailBoundRule) -> CriterionResult {
    timed(1, "haar-tail", 30.0, || {
        let trials = scale.trials(100_000);
        let bound = |law: &TailLawParams| match rule {
            TailBoundRule::Derived => law.bound(),
            TailBoundRule::TamperedBelowExact => 0.9 * law.exact(),
        };
        let out = haar_tail_against(&HaarTailParams::default(), trials, mix_seed(seed, 1), bound)?;
        Ok(Body {
            summary: format!("{} (m, θ) cells at {trials} trials", out.table.rows.len()),
            table: out.table,
            checks: out.checks,
        })
    })
}

pub fn f_cdf_criterion(seed: u64, _scale: Scale) -> CriterionResult {
    timed(2, "f-cdf", 10.0, || {
        // Kept at full size even when quick: the KS threshold assumes it.
        let draws = 100_000;
        let mut table = Table::new(&["claim", "a", "b", "draws", "seed", "ks", "threshold", "pass"]);
        let mut checks = Vec::new();
        let seed = mix_seed(seed, 2);
        for (i, (a, b)) in [(2u32, 6u32), (2, 14), (4, 10)].into_iter().enumerate() {
            let mut samples = fold_trials(
                draws,
                mix_seed(seed, i as u64),
                Vec::new,
                |acc: &mut Vec<f64>, rng, _| acc.push(sample_f_ratio(a, b, rng)),
                |mut x, y| {
                    x.extend(y);
                    x
                },
            );
            // Surface invalid parameters before the CDF is used as a plain function.
            f_distribution_cdf(1.0, a, b)?;
            let ks = ks_statistic(&mut samples, |t| f_distribution_cdf(t, a, b).expect("validated parameters"));
            let check = Check::new("f-cdf", format!("a={a} b={b}"), ks, 0.01, 0.0, ks < 0.01);
            table.push(row!["f-cdf", a, b, draws, seed, num(ks), num(0.01), check.passed]);
            checks.push(check);
        }
        Ok(Body { summary: format!("KS over {draws} draws"), table, checks })
    })
}

pub fn reduction_criterion(seed: u64, scale: Scale) -> CriterionResult {
    timed(3, "reduction-bound", 300.0, || {
        let trials = scale.trials(10_000);
        let params = ReductionParams::default();
        let mut out = reduction(&params, trials, mix_seed(seed, 3))?;
        let mut collision_free = 0;
        for cell in &params.cells {
            let gen = KeyedStateGenerator::new(params.family, cell.n, cell.m, params.family_seed)?;
            let worst = gen.max_collision_fidelity()?;
            out.checks.push(Check::new(
                "reduction-bound",
                format!("collision-free table n={} m={}", cell.n, cell.m),
                worst,
                1.0,
                0.0,
                worst < 1.0 - 1e-9,
            ));
            collision_free += usize::from(worst < 1.0 - 1e-9);
        }
        let accept = out.table.column("accept_pseudorandom").expect("column");
        let labels: Vec<String> =
            (0..out.table.rows.len()).map(|i| format!("pseudorandom side exact, row {i}")).collect();
        for (value, label) in accept.iter().zip(labels) {
            let exact_one = *value == "1";
            out.checks.push(Check::new(
                "reduction-bound",
                label,
                if exact_one { 1.0 } else { 0.0 },
                1.0,
                0.0,
                exact_one,
            ));
        }
        Ok(Body {
            summary: format!(
                "{} (n, m, t, f) rows at {trials} trials, {collision_free}/{} tables collision-free",
                out.table.rows.len(),
                params.cells.len()
            ),
            table: out.table,
            checks: out.checks,
        })
    })
}

pub fn presets_criterion(_seed: u64, _scale: Scale) -> CriterionResult {
    timed(4, "presets", 1.0, || {
        let mut table = Table::new(&["claim", "n", "m", "f", "delta", "limit", "pass"]);
        let mut checks = Vec::new();
        let crossover = weak_preset_crossover(CROSSOVER_SEARCH_LIMIT).ok_or_else(|| {
            crate::CliError::Config(format!("weak preset never drops below 3/4 up to n = {CROSSOVER_SEARCH_LIMIT}"))
        })?;
        let mut weak_ok = true;
        for n in 2..=CROSSOVER_SEARCH_LIMIT {
            let m = weak_output_qubits(n);
            let delta = delta_bound(&theorem_presets(Preset::Weak, n, m)?);
            let pass = n < crossover || delta < 0.75;
            weak_ok &= pass;
            if n <= 2 * crossover || n.is_power_of_two() {
                table.push(row!["weak-preset", n, m, num(2.0), num(delta), num(0.75), pass]);
            }
        }
        checks.push(Check::new(
            "weak-preset",
            format!("delta < 3/4 for {crossover} <= n <= {CROSSOVER_SEARCH_LIMIT}"),
            crossover as f64,
            0.75,
            0.0,
            weak_ok,
        ));
        for n in 1..=32 {
            for m in 10..=24 {
                let p = theorem_presets(Preset::Strong, n, m)?;
                let delta = delta_bound(&p);
                let limit = 2.0 / p.f;
                let check = Check::at_most("strong-preset", format!("n={n} m={m}"), delta, limit, 0.0);
                table.push(row!["strong-preset", n, m, num(p.f), num(delta), num(limit), check.passed]);
                checks.push(check);
            }
        }
        Ok(Body { summary: format!("weak-preset crossover at n = {crossover}"), table, checks })
    })
}

fn contract_puzzles(n: usize, seed: u64) -> Result<Vec<OneWayPuzzle>> {
    [PuzzleFamily::RandomCircuit, PuzzleFamily::HashTable, PuzzleFamily::Parity]
        .into_iter()
        .map(|family| Ok(PuzzleDescriptor { family, n, seed }.build()?))
        .collect()
}

pub fn oracle_contract_criterion(seed: u64, _scale: Scale) -> CriterionResult {
    timed(5, "oracle-contract", 120.0, || {
        let mut table = Table::new(&[
            "claim",
            "n",
            "family",
            "prefix",
            "puzzle",
            "exact",
            "estimate",
            "error",
            "tolerance",
            "inside",
        ]);
        let mut checks = Vec::new();
        let mut rng = seeded(mix_seed(seed, 5));
        for n in [3usize, 4] {
            let puzzles = contract_puzzles(n, seed)?;
            let tolerance = 1.0 / (n * n) as f64;
            let mut inside = 0;
            let queries = 100;
            for _ in 0..queries {
                let puzzle = &puzzles[rng.random_range(0..puzzles.len())];
                let (key, s) = run_sampler(puzzle, &mut rng);
                let prefix = key.prefix(rng.random_range(0..n));
                let exact = exact_conditional(puzzle, &prefix, &s)?;
                let estimate = pp_threshold_estimate(puzzle, &prefix, &s, &mut rng)?;
                let error = (estimate - exact).abs();
                let ok = error <= tolerance;
                inside += usize::from(ok);
                table.push(row![
                    "oracle-contract",
                    n,
                    puzzle.name(),
                    prefix,
                    s,
                    num(exact),
                    num(estimate),
                    num(error),
                    num(tolerance),
                    ok
                ]);
            }
            let fraction = inside as f64 / queries as f64;
            checks.push(Check::at_least("oracle-contract", format!("n={n} fraction inside"), fraction, 0.99, 0.0));
        }
        Ok(Body { summary: "100 random (prefix, puzzle) queries per n".into(), table, checks })
    })
}

fn likeliest_puzzle(puzzle: &OneWayPuzzle) -> Bitstring {
    puzzle
        .puzzle_distribution()
        .into_iter()
        .fold((Bitstring::empty(), -1.0), |best, (s, p)| if p > best.1 { (s, p) } else { best })
        .0
}

pub fn hybrid_criterion(seed: u64, scale: Scale) -> CriterionResult {
    timed(6, "hybrid-tvd", 180.0, || {
        let draws = scale.trials(100_000);
        let mut table = Table::new(&["claim", "family", "n", "puzzle", "quantity", "value", "bound", "pass"]);
        let mut checks = Vec::new();
        let oracle = ConditionalOracle::pp_default();
        let mut rng = seeded(mix_seed(seed, 6));
        for family in [PuzzleFamily::Parity, PuzzleFamily::HashTable, PuzzleFamily::RandomCircuit] {
            for n in [3usize, 4, 6] {
                let puzzle = PuzzleDescriptor { family, n, seed }.build()?;
                let s = likeliest_puzzle(&puzzle);
                let exact = exact_key_conditional(&puzzle, &s)?;
                let mut record = |quantity: String, value: f64, bound: f64, strict: bool| {
                    let pass = if strict { value < bound } else { value <= bound + 1e-12 };
                    table.push(row!["hybrid-tvd", family.name(), n, &s, &quantity, num(value), num(bound), pass]);
                    checks.push(Check::new(
                        "hybrid-tvd",
                        format!("{} n={n} {quantity}", family.name()),
                        value,
                        bound,
                        0.0,
                        pass,
                    ));
                };
                let step_bound = 1.0 / (n * n) as f64;
                let (_, exact_trace) = sample_key(&puzzle, &s, &ConditionalOracle::Exact, &mut rng)?;
                record("exact-trace-max-step".into(), exact_trace.max_step_error(), step_bound, false);
                for (i, d) in hybrid_distances(&puzzle, &s, &oracle, &mut rng)?.into_iter().enumerate() {
                    record(format!("step-tvd-{i}"), d, step_bound, false);
                }
                let counts = fold_trials(
                    draws as usize,
                    rng.random(),
                    || Ok(BTreeMap::new()),
                    |acc: &mut prslab_core::Result<BTreeMap<Bitstring, u64>>, rng, _| {
                        let Ok(map) = acc else { return };
                        match sample_key(&puzzle, &s, &oracle, rng) {
                            Ok((key, _)) => *map.entry(key).or_insert(0) += 1,
                            Err(e) => *acc = Err(e),
                        }
                    },
                    |a, b| {
                        let (mut a, b) = (a?, b?);
                        b.into_iter().for_each(|(k, c)| *a.entry(k).or_insert(0) += c);
                        Ok(a)
                    },
                )?;
                let empirical: BTreeMap<Bitstring, f64> =
                    counts.into_iter().map(|(k, c)| (k, c as f64 / draws as f64)).collect();
                let tvd = total_variation(&empirical, &exact.distribution);
                record("end-to-end-tvd".into(), tvd, 1.0 / n as f64, false);
                let noise = empirical_tvd_error(&exact.distribution, draws);
                record("estimator-error".into(), noise, 1.0 / (4 * n) as f64, true);
            }
        }
        Ok(Body { summary: format!("threshold oracle, {draws} key draws per puzzle"), table, checks })
    })
}

pub fn attack_criterion(seed: u64, scale: Scale) -> CriterionResult {
    timed(7, "attack-success", 300.0, || {
        let trials = scale.trials(10_000);
        let puzzles: Vec<PuzzleDescriptor> = PuzzleFamily::ALL
            .into_iter()
            .flat_map(|family| [3, 4, 6].map(|n| PuzzleDescriptor { family, n, seed }))
            .collect();
        let mut table = Table::default();
        let mut checks = Vec::new();
        for (i, oracle) in [ConditionalOracle::Exact, ConditionalOracle::pp_default()].into_iter().enumerate() {
            let params = PuzzleAttackParams { puzzles: puzzles.clone(), oracle };
            let out = puzzle_attack(&params, trials, mix_seed(seed, 70 + i as u64))?;
            for correctness in out.table.column("correctness").expect("column") {
                let c: f64 = correctness.parse().expect("number");
                checks.push(Check::new(
                    "attack-success",
                    "puzzle correctness is 1",
                    c,
                    1.0,
                    1e-9,
                    (c - 1.0).abs() <= 1e-9,
                ));
            }
            if table.header.is_empty() {
                table.header = out.table.header;
            }
            table.rows.extend(out.table.rows);
            checks.extend(out.checks);
        }
        Ok(Body {
            summary: format!("{} puzzles, exact and threshold oracles, {trials} trials each", puzzles.len()),
            table,
            checks,
        })
    })
}

/// Sample sizes and repetitions of the moment convergence sweep.
const SWEEP_SAMPLES: [u64; 6] = [500, 1000, 2000, 4000, 8000, 16000];
const SWEEP_REPEATS: usize = 16;

pub fn design_criterion(seed: u64, scale: Scale) -> CriterionResult {
    timed(8, "design-moments", 120.0, || {
        let mut table = Table::new(&["claim", "quantity", "m", "t", "samples", "value", "target", "tolerance", "pass"]);
        let mut checks = Vec::new();
        let mut rng = seeded(mix_seed(seed, 8));
        let target = haar_moment(1, 2)?;
        let source = HaarSource { num_qubits: 1 };
        let mut push =
            |table: &mut Table, claim: &str, quantity: &str, m: usize, t: usize, samples: u64, check: Check| {
                table.push(row![
                    claim,
                    quantity,
                    m,
                    t,
                    samples,
                    num(check.estimate),
                    num(check.bound),
                    num(check.ci),
                    check.passed
                ]);
                checks.push(check);
            };

        let at_1e4 = trace_distance(&empirical_moment(&source, 2, 10_000, &mut rng)?, &target)?;
        push(
            &mut table,
            "design-moment",
            "haar-distance",
            1,
            2,
            10_000,
            Check::new("design-moment", "distance at 1e4 samples", at_1e4, 0.05, 0.0, at_1e4 < 0.05),
        );

        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for samples in SWEEP_SAMPLES {
            let mut total = 0.0;
            for _ in 0..SWEEP_REPEATS {
                total += trace_distance(&empirical_moment(&source, 2, samples, &mut rng)?, &target)?;
            }
            let mean = total / SWEEP_REPEATS as f64;
            table.push(row!["design-moment", "mean-haar-distance", 1, 2, samples, num(mean), "", "", ""]);
            xs.push((samples as f64).ln());
            ys.push(mean.ln());
        }
        let fitted = slope(&xs, &ys);
        push(
            &mut table,
            "design-moment",
            "log-log-slope",
            1,
            2,
            0,
            Check::new("design-moment", "convergence slope", fitted, -0.5, 0.1, (fitted + 0.5).abs() <= 0.1),
        );

        for m in 1..=3 {
            let gen = KeyedStateGenerator::new(FamilyKind::Constant, 4, m, 0)?;
            let eps = design_quality(&gen, 1, DesignMode::ExactOverKeys, &mut rng)?;
            let expected = 2.0 * (1.0 - 1.0 / (1u64 << m) as f64);
            push(
                &mut table,
                "design-moment",
                "constant-family-quality",
                m,
                1,
                16,
                Check::new(
                    "design-moment",
                    format!("constant family m={m}"),
                    eps,
                    expected,
                    1e-6,
                    (eps - expected).abs() <= 1e-6,
                ),
            );
        }

        let trials = scale.trials(5_000);
        for Cell { n, m } in [Cell { n: 3, m: 1 }, Cell { n: 4, m: 2 }] {
            let gen = KeyedStateGenerator::new(FamilyKind::Lookup, n, m, 1)?;
            let report = design_chain(&gen, 1, trials, &mut rng)?;
            let gap = report.advantage.accept_prob_pseudorandom - report.advantage.accept_prob_haar;
            let ci = report.advantage.ci_pseudorandom + report.advantage.ci_haar;
            push(
                &mut table,
                "design-chain",
                "acceptance-gap",
                m,
                2,
                trials,
                Check::new(
                    "design-chain",
                    format!("n={n} m={m} gap"),
                    gap,
                    report.epsilon_hat,
                    ci,
                    report.design_gap_holds,
                ),
            );
            push(
                &mut table,
                "design-chain",
                "family-acceptance",
                m,
                2,
                trials,
                Check::new(
                    "design-chain",
                    format!("n={n} m={m} delta chain"),
                    report.advantage.accept_prob_pseudorandom,
                    report.delta + report.epsilon_hat,
                    report.advantage.ci_pseudorandom,
                    report.delta_chain_holds,
                ),
            );
        }
        Ok(Body { summary: format!("slope {fitted:.3}, distance {at_1e4:.4} at 1e4 samples"), table, checks })
    })
}

/// Criteria 1 to 8 in order. Determinism (criterion 9) is a property of
/// running this suite twice and is checked from outside.
pub fn run_criteria(seed: u64, scale: Scale) -> Vec<CriterionResult> {
    vec![
        haar_tail_criterion(seed, scale, TailBoundRule::Derived),
        f_cdf_criterion(seed, scale),
        reduction_criterion(seed, scale),
        presets_criterion(seed, scale),
        oracle_contract_criterion(seed, scale),
        hybrid_criterion(seed, scale),
        attack_criterion(seed, scale),
        design_criterion(seed, scale),
    ]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriterionSummary {
    pub number: u8,
    pub name: String,
    pub passed: bool,
    pub summary: String,
    pub elapsed_seconds: f64,
    pub limit_seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub scale: Scale,
    pub criteria: Vec<CriterionSummary>,
    pub passed: bool,
    pub wall_clock_seconds: f64,
}

/// Writes one CSV per criterion and `verify-report.json` into `out`.
pub fn write_suite(
    results: &[CriterionResult],
    seed: u64,
    scale: Scale,
    wall_clock_seconds: f64,
    out: &Path,
) -> Result<SuiteReport> {
    for r in results {
        r.table.write_csv(&output_path(out, &r.file_stem(), "csv"))?;
    }
    let report = SuiteReport {
        seed,
        scale,
        criteria: results
            .iter()
            .map(|r| CriterionSummary {
                number: r.number,
                name: r.name.to_string(),
                passed: r.passed(),
                summary: r.summary.clone(),
                elapsed_seconds: r.elapsed_seconds,
                limit_seconds: r.limit_seconds,
            })
            .collect(),
        passed: results.iter().all(CriterionResult::passed),
        wall_clock_seconds,
    };
    write_json(&output_path(out, "verify-report", "json"), &report)?;
    Ok(report)
}
