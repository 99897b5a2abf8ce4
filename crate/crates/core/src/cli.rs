//! Command-line front end. Every command reads JSON/CSV inputs, writes its
//! outputs plus `manifest.json` into the output directory, and prints only the
//! manifest path on stdout.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bootstrap::{TestReport, DEFAULT_BOOTSTRAP_DRAWS};
use crate::debias::DebiasDiagnostics;
use crate::experiments::{
    banded_design, block_diagonal_design, run_experiment, ExperimentConfig, ExperimentResult, SummaryRow,
};
use crate::io::{
    matrix_from_rows, read_json, read_sample_csv, read_square_csv, write_json, write_qq_csv, write_sample_csv,
    write_square_csv, write_summary_csv, SampleMetadata,
};
use crate::model::{simulate, InnovationSpec, TransitionMatrix, DEFAULT_DECAY_THRESHOLD};
use crate::pipeline::{fit, FitOutput, PipelineConfig};
use crate::{Error, Result, VERSION};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const RUNTIME: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const UNSTABLE: i32 = 3;
    pub const DEGENERATE_MU: i32 = 4;
    pub const NOT_CONVERGED: i32 = 5;
    pub const REPLICATIONS_FAILED: i32 = 6;
}

/// Largest tolerated share of failed replications in `experiment`.
pub const MAX_FAILURE_RATE: f64 = 0.2;

#[derive(Debug, Parser)]
#[command(name = "robvar", version, about = "Robust de-biased inference for VAR(1) transition matrices")]
pub struct Cli {
    /// Overrides the seed in the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a VAR(1) trajectory.
    Simulate(ConfigArg),
    /// Fit the de-biased estimator and simultaneous intervals.
    Fit(DataArgs),
    /// Test H0: A = beta0 for all entries simultaneously.
    Test(TestArgs),
    /// Run a grid of Monte Carlo experiments (qq data and size table).
    Experiment(OptionalConfigArg),
    /// Run one Monte Carlo experiment and write its qq data.
    Qq(OptionalConfigArg),
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct OptionalConfigArg {
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Sample CSV (`t,x1..xp` or `x1..xp`).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Hypothesized transition matrix as CSV with header `x1..xp`.
    #[arg(long)]
    pub beta0: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Transition matrix of a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransitionSpec {
    Matrix { entries: Vec<Vec<f64>> },
    Banded { p: usize, s: usize, lambda: f64 },
    BlockDiagonal { p: usize, s: usize, seed: u64 },
}

impl TransitionSpec {
    pub fn build(&self, decay_threshold: f64) -> Result<TransitionMatrix> {
        let a = match self {
            TransitionSpec::Matrix { entries } => return TransitionMatrix::with_threshold(matrix_from_rows(entries)?, decay_threshold),
            TransitionSpec::Banded { p, s, lambda } => banded_design(*p, *s, *lambda)?,
            TransitionSpec::BlockDiagonal { p, s, seed } => block_diagonal_design(*p, *s, *seed)?,
        };
        TransitionMatrix::with_threshold(a.entries, decay_threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub n: usize,
    pub transition: TransitionSpec,
    pub innovation: InnovationSpec,
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_decay_threshold")]
    pub decay_threshold: f64,
}

fn default_decay_threshold() -> f64 {
    DEFAULT_DECAY_THRESHOLD
}

/// Settings for `fit` and `test`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    pub pipeline: PipelineConfig,
    pub bootstrap_draws: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            bootstrap_draws: DEFAULT_BOOTSTRAP_DRAWS,
            alpha: 0.05,
            seed: 0,
        }
    }
}

impl InferenceConfig {
    fn validate(&self) -> Result<()> {
        if self.bootstrap_draws == 0 {
            return Err(Error::invalid("bootstrap_draws", "must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Either a list of experiments or, when empty, the default four-design grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSuite {
    pub experiments: Vec<ExperimentConfig>,
    pub master_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the effective configuration as JSON.
    pub config_digest: String,
    pub master_seed: u64,
    pub artifact_version: String,
    pub outputs: Vec<String>,
    pub wall_time_seconds: f64,
}

/// Summary written by `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub n: usize,
    pub p: usize,
    pub threshold: f64,
    pub pilot_lambda: f64,
    pub pilot_converged: bool,
    pub pilot_iterations: Vec<usize>,
    pub clime_lambda: f64,
    pub clime_feasibility_gap: f64,
    pub debias: DebiasDiagnostics,
    pub psd_clip_magnitude: f64,
    pub alpha: f64,
    pub bootstrap_draws: usize,
    pub critical_value: f64,
    pub half_width: f64,
    pub seed: u64,
}

fn digest<T: Serialize>(config: &T) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    let hash = Sha256::digest(&bytes);
    Ok(hash.iter().map(|b| format!("{b:02x}")).collect())
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn finish<T: Serialize>(self, command: &str, config: &T, seed: u64, start: Instant) -> Result<PathBuf> {
        let manifest = RunManifest {
            command: command.into(),
            config_digest: digest(config)?,
            master_seed: seed,
            artifact_version: VERSION.into(),
            outputs: self.files,
            wall_time_seconds: start.elapsed().as_secs_f64(),
        };
        let path = self.dir.join("manifest.json");
        write_json(&path, &manifest)?;
        Ok(path)
    }
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub error: Error,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.error)?;
        if self.code == exit::NOT_CONVERGED {
            write!(f, "; set pipeline.debias.allow_unconverged or raise pipeline.solver.max_iter")?;
        }
        Ok(())
    }
}

/// Maps a library error to its exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. } | Error::Json(_) | Error::InvalidParameter { .. } | Error::NonSquare { .. } => exit::CONFIG,
        Error::DimensionMismatch { .. } => exit::CONFIG,
        Error::Unstable { .. } => exit::UNSTABLE,
        Error::DegenerateMu { .. } => exit::DEGENERATE_MU,
        Error::NotConverged { .. } => exit::NOT_CONVERGED,
        _ => exit::RUNTIME,
    }
}

impl From<Error> for CliError {
    fn from(error: Error) -> Self {
        CliError {
            code: exit_code(&error),
            error,
        }
    }
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> std::result::Result<T, CliError> {
    read_json(path).map_err(|error| CliError {
        code: exit::CONFIG,
        error: match error {
            Error::Parse { line, column, message } => Error::Parse {
                line,
                column,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        },
    })
}

fn read_input<T>(r: Result<T>) -> std::result::Result<T, CliError> {
    r.map_err(|error| CliError {
        code: match error {
            Error::Io(_) => exit::RUNTIME,
            _ => exit::CONFIG,
        },
        error,
    })
}

/// Runs a parsed command line and returns the manifest path.
pub fn run(cli: &Cli) -> std::result::Result<PathBuf, CliError> {
    if let Some(w) = cli.workers {
        // a pool may already exist when called repeatedly in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build_global();
    }
    let start = Instant::now();
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(cli, &a.config, start),
        Command::Fit(a) => cmd_fit(cli, a, start),
        Command::Test(a) => cmd_test(cli, a, start),
        Command::Experiment(a) => cmd_experiment(cli, a.config.as_deref(), start),
        Command::Qq(a) => cmd_qq(cli, a.config.as_deref(), start),
    }
}

fn cmd_simulate(cli: &Cli, path: &Path, start: Instant) -> std::result::Result<PathBuf, CliError> {
    let mut config: SimulateConfig = read_config(path)?;
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if config.n == 0 {
        return Err(Error::invalid("n", "must be positive").into());
    }
    config.innovation.validate(config.transition_dim()).map_err(CliError::from)?;
    let a = config.transition.build(config.decay_threshold)?;
    let sample = simulate(&a, &config.innovation, config.n, config.burn_in, config.seed)?;
    let mut out = Outputs::new(&cli.out_dir)?;
    write_sample_csv(&out.path("sample.csv"), &sample)?;
    write_json(&out.path("sample.json"), &SampleMetadata::new(&sample, &a))?;
    Ok(out.finish("simulate", &config, config.seed, start)?)
}

impl SimulateConfig {
    fn transition_dim(&self) -> usize {
        match &self.transition {
            TransitionSpec::Matrix { entries } => entries.len(),
            TransitionSpec::Banded { p, .. } | TransitionSpec::BlockDiagonal { p, .. } => *p,
        }
    }
}

fn inference_config(cli: &Cli, path: Option<&Path>) -> std::result::Result<InferenceConfig, CliError> {
    let mut config = match path {
        Some(p) => read_config(p)?,
        None => InferenceConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

fn fit_report(out: &FitOutput, config: &InferenceConfig, c: f64, half_width: f64) -> FitReport {
    FitReport {
        n: out.estimate.n,
        p: out.estimate.p(),
        threshold: out.weight.threshold,
        pilot_lambda: out.pilot.lambda,
        pilot_converged: out.pilot.all_converged(),
        pilot_iterations: out.pilot.iterations_per_row.clone(),
        clime_lambda: out.precision.lambda_n,
        clime_feasibility_gap: out.precision.feasibility_gap,
        debias: out.estimate.diagnostics(),
        psd_clip_magnitude: out.covariance.psd_clip_magnitude,
        alpha: config.alpha,
        bootstrap_draws: config.bootstrap_draws,
        critical_value: c,
        half_width,
        seed: config.seed,
    }
}

fn cmd_fit(cli: &Cli, args: &DataArgs, start: Instant) -> std::result::Result<PathBuf, CliError> {
    let config = inference_config(cli, args.config.as_deref())?;
    let sample = read_input(read_sample_csv(&args.data))?;
    let out = fit(&sample, &config.pipeline)?;
    let ci = out.intervals(config.bootstrap_draws, config.alpha, config.seed)?;
    let mut files = Outputs::new(&cli.out_dir)?;
    write_square_csv(&files.path("beta_check.csv"), &out.estimate.beta_check)?;
    write_square_csv(&files.path("beta_hat.csv"), &out.estimate.beta_hat)?;
    write_square_csv(&files.path("ci_lower.csv"), &ci.lower)?;
    write_square_csv(&files.path("ci_upper.csv"), &ci.upper)?;
    write_json(
        &files.path("fit.json"),
        &fit_report(&out, &config, ci.critical_value, ci.half_width),
    )?;
    Ok(files.finish("fit", &config, config.seed, start)?)
}

fn cmd_test(cli: &Cli, args: &TestArgs, start: Instant) -> std::result::Result<PathBuf, CliError> {
    let config = inference_config(cli, args.config.as_deref())?;
    let sample = read_input(read_sample_csv(&args.data))?;
    let beta0: DMatrix<f64> = read_input(read_square_csv(&args.beta0))?;
    if beta0.nrows() != sample.p {
        return Err(Error::DimensionMismatch {
            context: "beta0 dimension",
            expected: sample.p,
            actual: beta0.nrows(),
        }
        .into());
    }
    let out = fit(&sample, &config.pipeline)?;
    let report: TestReport = out.test(&beta0, config.bootstrap_draws, config.alpha, config.seed)?;
    let mut files = Outputs::new(&cli.out_dir)?;
    write_json(&files.path("test_report.json"), &report)?;
    write_square_csv(&files.path("beta_check.csv"), &out.estimate.beta_check)?;
    Ok(files.finish("test", &config, config.seed, start)?)
}

fn write_experiment(files: &mut Outputs, result: &ExperimentResult) -> Result<()> {
    let name = format!("qq_{}.csv", result.config.label());
    match result.qq() {
        Ok(pairs) => write_qq_csv(&files.path(&name), &pairs)?,
        Err(e) => eprintln!("{}: no qq data ({e})", result.config.label()),
    }
    for f in &result.failures {
        eprintln!("{} replication {}: {}", result.config.label(), f.rep_index, f.message);
    }
    Ok(())
}

fn check_failures(results: &[ExperimentResult]) -> std::result::Result<(), CliError> {
    if let Some(bad) = results.iter().find(|r| r.failure_rate() > MAX_FAILURE_RATE) {
        return Err(CliError {
            code: exit::REPLICATIONS_FAILED,
            error: Error::NumericalFailure(format!(
                "{}: {} of {} replications failed",
                bad.config.label(),
                bad.failures.len(),
                bad.config.replications
            )),
        });
    }
    Ok(())
}

fn cmd_experiment(cli: &Cli, path: Option<&Path>, start: Instant) -> std::result::Result<PathBuf, CliError> {
    let mut suite: ExperimentSuite = match path {
        Some(p) => read_config(p)?,
        None => ExperimentSuite::default(),
    };
    let seed = cli.seed.or(suite.master_seed).unwrap_or(ExperimentConfig::default().master_seed);
    if suite.experiments.is_empty() {
        suite.experiments = ExperimentConfig::default_grid(seed);
    }
    if cli.seed.is_some() || suite.master_seed.is_some() {
        for e in &mut suite.experiments {
            e.master_seed = seed;
        }
    }
    suite.master_seed = Some(seed);
    for e in &suite.experiments {
        e.validate()?;
    }
    let mut results = Vec::new();
    for e in &suite.experiments {
        eprintln!("running {} (R = {}, B = {})", e.label(), e.replications, e.bootstrap_draws);
        results.push(run_experiment(e)?);
    }
    let mut files = Outputs::new(&cli.out_dir)?;
    for r in &results {
        write_experiment(&mut files, r)?;
    }
    let rows: Vec<SummaryRow> = results.iter().map(|r| r.summary()).collect();
    write_summary_csv(&files.path("size_table.csv"), &rows)?;
    write_json(&files.path("experiment.json"), &suite)?;
    check_failures(&results)?;
    Ok(files.finish("experiment", &suite, seed, start)?)
}

fn cmd_qq(cli: &Cli, path: Option<&Path>, start: Instant) -> std::result::Result<PathBuf, CliError> {
    let mut config: ExperimentConfig = match path {
        Some(p) => read_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.master_seed = s;
    }
    config.validate()?;
    let result = run_experiment(&config)?;
    let mut files = Outputs::new(&cli.out_dir)?;
    write_experiment(&mut files, &result)?;
    write_summary_csv(&files.path("summary.csv"), &[result.summary()])?;
    check_failures(std::slice::from_ref(&result))?;
    Ok(files.finish("qq", &config, config.master_seed, start)?)
}
