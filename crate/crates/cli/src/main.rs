use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use prslab::config::{
    Cell, DeltaTableParams, DesignQualityParams, Experiment, ExperimentConfig, HaarTailParams, InverterKind,
    PuzzleAttackParams, ReductionParams,
};
use prslab::experiments::execute;
use prslab::verify::{run_criteria, write_suite, Scale};
use prslab::{CliError, Result};
use prslab_core::designstats::DesignMode;
use prslab_core::generators::FamilyKind;
use prslab_core::puzzles::{ConditionalOracle, PuzzleDescriptor, PuzzleFamily};

#[derive(Parser)]
#[command(name = "prslab", version, about = "Pseudorandom-state and one-way-puzzle experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Trials per cell.
    #[arg(long)]
    trials: Option<u64>,
    /// Cut trial counts by ten.
    #[arg(long)]
    quick: bool,
    /// Output directory for CSV and JSON files.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// JSON experiment config; flags above override its seed and trials.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Haar fidelity tail against the exact law and its bound.
    HaarTail {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 3, 4, 6])]
        qubits: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.25, 0.5])]
        thresholds: Vec<f64>,
    },
    /// Distinguisher acceptance on keyed families and on Haar states.
    Reduction {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "lookup")]
        family: String,
        #[arg(long, default_value_t = 1)]
        family_seed: u64,
        /// Comma-separated n:m pairs.
        #[arg(long, value_delimiter = ',', default_values = ["4:6", "6:8", "8:10"])]
        cells: Vec<String>,
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2])]
        copies: Vec<usize>,
        #[arg(long = "f", value_delimiter = ',', default_values_t = [1.0, 2.0, 4.0, 8.0])]
        f_values: Vec<f64>,
        #[arg(long, default_value = "brute-force")]
        inverter: String,
    },
    /// Re-keys shipped puzzles with the postselection sampler.
    PuzzleAttack {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values = ["parity"])]
        family: Vec<String>,
        #[arg(long, value_delimiter = ',', default_values_t = [3usize])]
        n: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        puzzle_seed: u64,
        /// `exact` or `pp-threshold`.
        #[arg(long, default_value = "exact")]
        oracle: String,
        #[arg(long, default_value_t = prslab_core::puzzles::DEFAULT_FAILURE_BUDGET)]
        failure_budget: f64,
    },
    /// Trace-norm distance of a family's moment to the Haar moment.
    DesignQuality {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "lookup")]
        family: String,
        #[arg(long, default_value_t = 1)]
        family_seed: u64,
        #[arg(long, default_value_t = 6)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, default_value_t = 1)]
        t: usize,
        /// Average over this many random keys instead of all keys.
        #[arg(long)]
        samples: Option<u64>,
    },
    /// Closed-form distinguisher bound over an (n, m, f) grid.
    DeltaTable {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = [2u32, 3, 4, 5, 6, 7, 8])]
        n: Vec<u32>,
        #[arg(long, value_delimiter = ',', default_values_t = [2u32, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12])]
        m: Vec<u32>,
        #[arg(long = "f", value_delimiter = ',', default_values_t = [2.0])]
        f_values: Vec<f64>,
    },
    /// Runs the acceptance battery and writes one CSV per criterion.
    Verify {
        #[command(flatten)]
        common: Common,
    },
}

const DEFAULT_SEED: u64 = 7;
const DEFAULT_TRIALS: u64 = 10_000;

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e| CliError::Config(format!("bad {what} '{s}': {e}")))
}

fn parse_cell(s: &str) -> Result<Cell> {
    let (n, m) = s.split_once(':').ok_or_else(|| CliError::Config(format!("cell '{s}' is not n:m")))?;
    Ok(Cell { n: parse(n, "n")?, m: parse(m, "m")? })
}

fn experiment_from_flags(command: &Command) -> Result<Option<Experiment>> {
    Ok(Some(match command {
        Command::HaarTail { qubits, thresholds, .. } => {
            Experiment::HaarTail(HaarTailParams { qubits: qubits.clone(), thresholds: thresholds.clone() })
        }
        Command::Reduction { family, family_seed, cells, copies, f_values, inverter, .. } => {
            Experiment::Reduction(ReductionParams {
                family: parse::<FamilyKind>(family, "family")?,
                family_seed: *family_seed,
                cells: cells.iter().map(|c| parse_cell(c)).collect::<Result<_>>()?,
                copies: copies.clone(),
                f_values: f_values.clone(),
                inverter: inverter.parse::<InverterKind>()?,
            })
        }
        Command::PuzzleAttack { family, n, puzzle_seed, oracle, failure_budget, .. } => {
            let oracle = match oracle.as_str() {
                "exact" => ConditionalOracle::Exact,
                "pp-threshold" => ConditionalOracle::PpThreshold { failure_budget: *failure_budget },
                other => return Err(CliError::Config(format!("unknown oracle '{other}'"))),
            };
            let mut puzzles = Vec::new();
            for f in family {
                let family: PuzzleFamily = parse(f, "puzzle family")?;
                puzzles.extend(n.iter().map(|&n| PuzzleDescriptor { family, n, seed: *puzzle_seed }));
            }
            Experiment::PuzzleAttack(PuzzleAttackParams { puzzles, oracle })
        }
        Command::DesignQuality { family, family_seed, n, m, t, samples, .. } => {
            Experiment::DesignQuality(DesignQualityParams {
                family: parse(family, "family")?,
                family_seed: *family_seed,
                n: *n,
                m: *m,
                t: *t,
                mode: samples.map_or(DesignMode::ExactOverKeys, |samples| DesignMode::Sampled { samples }),
            })
        }
        Command::DeltaTable { n, m, f_values, .. } => Experiment::DeltaTable(DeltaTableParams {
            n_values: n.clone(),
            m_values: m.clone(),
            f_values: f_values.clone(),
        }),
        Command::Verify { .. } => return Ok(None),
    }))
}

fn common(command: &Command) -> &Common {
    match command {
        Command::HaarTail { common, .. }
        | Command::Reduction { common, .. }
        | Command::PuzzleAttack { common, .. }
        | Command::DesignQuality { common, .. }
        | Command::DeltaTable { common, .. }
        | Command::Verify { common } => common,
    }
}

fn build_config(common: &Common, experiment: Experiment) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => {
            let config = ExperimentConfig::load(path)?;
            if config.experiment.name() != experiment.name() {
                return Err(CliError::Config(format!(
                    "config describes a {} experiment, not {}",
                    config.experiment.name(),
                    experiment.name()
                )));
            }
            config
        }
        None => ExperimentConfig::new(DEFAULT_SEED, DEFAULT_TRIALS, experiment),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(trials) = common.trials {
        config.trials = trials;
    }
    if common.quick {
        config.trials = Scale::QUICK.trials(config.trials);
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<bool> {
    let common = common(&cli.command).clone();
    if let Some(jobs) = common.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    match experiment_from_flags(&cli.command)? {
        Some(experiment) => {
            let config = build_config(&common, experiment)?;
            let report = execute(&config, &common.out)?;
            println!(
                "{}: {} rows, {} checks, {} ({:.2}s) -> {}",
                config.experiment.name(),
                report.rows,
                report.checks.len(),
                if report.passed { "pass" } else { "FAIL" },
                report.wall_clock_seconds,
                common.out.display()
            );
            for check in report.checks.iter().filter(|c| !c.passed) {
                println!(
                    "  failed: {} (estimate {} vs bound {} ± {})",
                    check.label, check.estimate, check.bound, check.ci
                );
            }
            Ok(report.passed)
        }
        None => {
            if common.config.is_some() || common.trials.is_some() {
                return Err(CliError::Config("verify takes --seed, --quick, --out and --jobs only".into()));
            }
            let seed = common.seed.unwrap_or(DEFAULT_SEED);
            let scale = Scale { quick: common.quick };
            let start = Instant::now();
            let results = run_criteria(seed, scale);
            for r in &results {
                println!("{}", r.line());
            }
            let report = write_suite(&results, seed, scale, start.elapsed().as_secs_f64(), &common.out)?;
            println!("verify: {}", if report.passed { "all criteria pass" } else { "FAILED" });
            Ok(report.passed)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
