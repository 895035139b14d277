//! Command-line front end. Exit codes: 0 success, 1 usage or config
//! error, 2 runtime failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use super::benchmark::{metrics_csv, timing_csv, trials_csv};
use super::export::{optima_csv, stationary_csv, surface_csv, surface_file_name};
use super::{
    run_benchmark, run_landscape_export, simulate_trial, trial_rng, write_files, InitMode, Prepared,
    Scenario, SimulatedTrial, SnrDb,
};
use crate::error::Error;
use crate::estimator::{aligned_squared_errors, estimate_with, random_initialization, EstimationResult, Initialization};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "vi-aoa",
    version,
    about = "Angle-of-arrival and channel-gain estimation by variational inference",
    after_help = "Set THREADS to cap the number of worker threads."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    /// Scenario file (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Override the scenario's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for output files; created if missing.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Output format. `simulate` and `estimate` write JSON only;
    /// the other commands default to CSV.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

impl Common {
    fn format_or(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }

    fn require_json(&self, command: &str) -> Result<(), Failure> {
        match self.format {
            Some(Format::Csv) => Err(Failure::Usage(format!("{command} writes JSON only"))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize every (SNR, trial) observation to observations.json.
    Simulate(#[command(flatten)] Common),
    /// Run the estimator on one observation and write estimate.json.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Observation file written by `simulate`; synthesized when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Index into the scenario's SNR list.
        #[arg(long, default_value_t = 0)]
        snr_index: usize,
        #[arg(long, default_value_t = 0)]
        trial: usize,
        /// Record wall-clock time in the output.
        #[arg(long)]
        timing: bool,
    },
    /// Export aliased optima, stationary points and loss surfaces.
    Landscape(#[command(flatten)] Common),
    /// Compare the estimator with MUSIC and least squares over the SNR sweep.
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Also write per-cell wall-clock totals to timing.csv.
        #[arg(long)]
        timing: bool,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn runtime(e: Error) -> Failure {
    Failure::Runtime(e.to_string())
}

fn load(common: &Common) -> Result<Scenario, Failure> {
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", common.config.display())))?;
    let mut scenario = Scenario::from_json(&text).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(seed) = common.seed {
        scenario.seed = seed;
    }
    scenario.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(scenario)
}

fn json<T: Serialize>(value: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn write(dir: &Path, files: Vec<(String, String)>) -> Result<(), Failure> {
    for path in write_files(dir, &files)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn simulate(common: &Common) -> Result<(), Failure> {
    common.require_json("simulate")?;
    let scenario = load(common)?;
    let prepared = Prepared::new(&scenario).map_err(runtime)?;
    let mut trials = Vec::new();
    for s in 0..scenario.snr_db.len() {
        for t in 0..scenario.n_trials {
            let mut rng = trial_rng(scenario.seed, s, t);
            trials.push(simulate_trial(&prepared, s, t, &mut rng).map_err(runtime)?);
        }
    }
    write(&common.out_dir, vec![("observations.json".into(), json(&trials)?)])
}

#[derive(Debug, Serialize)]
struct EstimateOutput {
    snr_db: SnrDb,
    trial: usize,
    true_aoas_deg: Vec<f64>,
    estimated_aoas_deg: Vec<f64>,
    /// Squared angle error per user after sorted matching (rad²).
    aoa_sq_errors: Vec<f64>,
    result: EstimationResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_clock_ms: Option<f64>,
}

fn read_trial(path: &Path, snr: SnrDb, trial: usize) -> Result<SimulatedTrial, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let parse = |v: serde_json::Value| {
        serde_json::from_value::<SimulatedTrial>(v).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
    };
    match value {
        serde_json::Value::Array(items) => items
            .into_iter()
            .map(parse)
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .find(|t| t.snr_db == snr && t.trial == trial)
            .ok_or_else(|| Failure::Usage(format!("{} has no observation for SNR {snr}, trial {trial}", path.display()))),
        other => parse(other),
    }
}

fn estimate(common: &Common, input: Option<&Path>, snr_index: usize, trial: usize, timing: bool) -> Result<(), Failure> {
    common.require_json("estimate")?;
    let scenario = load(common)?;
    let snr = *scenario
        .snr_db
        .get(snr_index)
        .ok_or_else(|| Failure::Usage(format!("--snr-index {snr_index} is out of range")))?;
    let prepared = Prepared::new(&scenario).map_err(runtime)?;
    let mut rng = trial_rng(scenario.seed, snr_index, trial);
    let sim = match input {
        Some(path) => read_trial(path, snr, trial)?,
        None => simulate_trial(&prepared, snr_index, trial, &mut rng).map_err(runtime)?,
    };
    let init = match scenario.init_mode {
        InitMode::PseudoLabels => Initialization::PseudoLabels,
        InitMode::Random => Initialization::Fixed(
            random_initialization(&prepared.search_sector, scenario.users, &mut rng).map_err(runtime)?,
        ),
    };
    let start = Instant::now();
    let result = estimate_with(
        &sim.observation,
        std::slice::from_ref(&prepared.prior),
        &prepared.search_sector,
        &prepared.grid,
        &prepared.optimizer,
        &init,
    )
    .map_err(runtime)?;
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    let out = EstimateOutput {
        snr_db: sim.snr_db,
        trial: sim.trial,
        true_aoas_deg: sim.true_aoas.degrees(),
        estimated_aoas_deg: result.state.aoa_estimate.degrees(),
        aoa_sq_errors: aligned_squared_errors(&result.state.aoa_estimate, &sim.true_aoas),
        result,
        wall_clock_ms: timing.then_some(elapsed),
    };
    write(&common.out_dir, vec![("estimate.json".into(), json(&out)?)])
}

fn landscape(common: &Common) -> Result<(), Failure> {
    let scenario = load(common)?;
    let report = run_landscape_export(&scenario).map_err(runtime)?;
    let files = match common.format_or(Format::Csv) {
        Format::Json => vec![("landscape.json".into(), json(&report)?)],
        Format::Csv => {
            let mut files = vec![
                ("optima.csv".into(), optima_csv(&report.optima)),
                ("stationary.csv".into(), stationary_csv(&report.stationary)),
            ];
            files.extend(report.surfaces.iter().map(|s| (surface_file_name(&s.spec), surface_csv(s))));
            files
        }
    };
    write(&common.out_dir, files)
}

fn benchmark(common: &Common, timing: bool) -> Result<(), Failure> {
    let scenario = load(common)?;
    let report = run_benchmark(&scenario).map_err(runtime)?;
    let mut files: Vec<(String, String)> = match common.format_or(Format::Csv) {
        Format::Json => vec![("benchmark.json".into(), json(&report)?)],
        Format::Csv => vec![
            ("metrics.csv".into(), metrics_csv(&report.rows)),
            ("trials.csv".into(), trials_csv(&report.trials)),
        ],
    };
    if timing {
        files.push(("timing.csv".into(), timing_csv(&report.rows)));
    }
    let failures: usize = report.rows.iter().map(|r| r.failures).sum();
    if failures > 0 {
        eprintln!("{failures} trial(s) failed; see the status column");
    }
    write(&common.out_dir, files)
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("THREADS must be a positive integer, got {value:?}")))?;
    #[cfg(feature = "parallel")]
    {
        // A pool already built by the host process is left as is.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(())
}

/// Parse `args` (including the program name), run the command and return
/// the process exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = configure_threads().and_then(|()| match &cli.command {
        Command::Simulate(common) => simulate(common),
        Command::Estimate {
            common,
            input,
            snr_index,
            trial,
            timing,
        } => estimate(common, input.as_deref(), *snr_index, *trial, *timing),
        Command::Landscape(common) => landscape(common),
        Command::Benchmark { common, timing } => benchmark(common, *timing),
    });
    match outcome {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            EXIT_RUNTIME
        }
    }
}
