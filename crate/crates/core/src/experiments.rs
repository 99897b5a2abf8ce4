//! Simulation designs and the Monte Carlo driver for size, coverage and qq data.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_draws, critical_value, monte_carlo_p_value, DEFAULT_BOOTSTRAP_DRAWS};
use crate::debias::statistic_of;
use crate::model::{simulate, spectral_radius, InnovationSpec, TransitionMatrix};
use crate::pipeline::{fit, ClimeLambdaRule, PilotLambdaRule, PipelineConfig};
use crate::rng::{derive_seed, substream, Domain};
use crate::stats::{ks_two_sample, quantiles};
use crate::{Error, Result};

/// `A_raw = (lambda^{|i-j|} 1{|i-j| <= s})`, rescaled to spectral radius 1/2.
pub fn banded_design(p: usize, s: usize, lambda: f64) -> Result<TransitionMatrix> {
    if p == 0 {
        return Err(Error::invalid("p", "must be positive"));
    }
    if s >= p.max(2) {
        return Err(Error::invalid("s", "bandwidth must satisfy 1 <= s < p"));
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::invalid("lambda", "must lie in (0, 1)"));
    }
    let raw = DMatrix::from_fn(p, p, |i, j| {
        let d = i.abs_diff(j);
        if d <= s {
            lambda.powi(d as i32)
        } else {
            0.0
        }
    });
    let rho = spectral_radius(&raw)?;
    if rho == 0.0 {
        return Err(Error::DegenerateDesign("banded matrix has zero spectral radius".into()));
    }
    TransitionMatrix::new(raw / (2.0 * rho))
}

/// Upper-bidiagonal blocks `[[l, l^2], [0, l]]` (size `s`, last block
/// truncated) with `l ~ Unif(-0.8, 0.8)` drawn from `seed`.
pub fn block_diagonal_design(p: usize, s: usize, seed: u64) -> Result<TransitionMatrix> {
    if p == 0 || s == 0 {
        return Err(Error::invalid("s", "block size and p must be positive"));
    }
    let mut rng = substream(seed, Domain::Design, 0);
    let mut a = DMatrix::zeros(p, p);
    for start in (0..p).step_by(s) {
        let l: f64 = rng.gen_range(-0.8..0.8);
        let end = (start + s).min(p);
        for i in start..end {
            a[(i, i)] = l;
            if i + 1 < end {
                a[(i, i + 1)] = l * l;
            }
        }
    }
    TransitionMatrix::new(a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Design {
    Banded { lambda: f64, s: usize },
    BlockDiagonal { s: usize },
}

impl Design {
    pub fn name(&self) -> &'static str {
        match self {
            Design::Banded { .. } => "banded",
            Design::BlockDiagonal { .. } => "block_diagonal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub design: Design,
    pub n: usize,
    pub p: usize,
    pub innovation: InnovationSpec,
    pub replications: usize,
    pub bootstrap_draws: usize,
    pub alpha: f64,
    pub master_seed: u64,
    pub pilot_lambda: Option<f64>,
    pub clime_lambda: Option<f64>,
    #[serde(rename = "threshold_T")]
    pub threshold_t: Option<f64>,
    /// Added to entry (0, 0) of the hypothesized matrix; zero tests the truth.
    pub power_delta: f64,
    pub pipeline: PipelineConfig,
}

/// `floor(ln p)`, at least 1.
pub fn default_bandwidth(p: usize) -> usize {
    ((p as f64).ln().floor() as usize).max(1)
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            design: Design::Banded { lambda: 0.5, s: default_bandwidth(10) },
            n: 30,
            p: 10,
            innovation: InnovationSpec::student_t(10.0),
            replications: 100,
            bootstrap_draws: DEFAULT_BOOTSTRAP_DRAWS,
            alpha: 0.05,
            master_seed: 2018,
            pilot_lambda: None,
            clime_lambda: None,
            threshold_t: None,
            power_delta: 0.0,
            pipeline: PipelineConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// The four designs of the simulation study: banded and block diagonal, t(5) and t(10).
    pub fn default_grid(master_seed: u64) -> Vec<ExperimentConfig> {
        let s = default_bandwidth(10);
        let mut out = Vec::new();
        for design in [Design::Banded { lambda: 0.5, s }, Design::BlockDiagonal { s }] {
            for df in [5.0, 10.0] {
                out.push(ExperimentConfig {
                    design: design.clone(),
                    innovation: InnovationSpec::student_t(df),
                    master_seed,
                    ..Default::default()
                });
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.p == 0 {
            return Err(Error::invalid("n", "need n >= 2 and p >= 1"));
        }
        if self.replications == 0 {
            return Err(Error::invalid("replications", "must be positive"));
        }
        if self.bootstrap_draws == 0 {
            return Err(Error::invalid("bootstrap_draws", "must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha", "must lie in (0, 1)"));
        }
        self.innovation.validate(self.p)?;
        if self.innovation.is_degenerate() {
            return Err(Error::invalid("innovation.scale", "zero innovations give a degenerate series"));
        }
        if !self.power_delta.is_finite() {
            return Err(Error::invalid("power_delta", "must be finite"));
        }
        Ok(())
    }

    pub fn transition(&self) -> Result<TransitionMatrix> {
        match self.design {
            Design::Banded { lambda, s } => banded_design(self.p, s, lambda),
            Design::BlockDiagonal { s } => {
                block_diagonal_design(self.p, s, derive_seed(self.master_seed, Domain::Design, 0))
            }
        }
    }

    /// Pipeline settings with the per-experiment overrides applied.
    pub fn effective_pipeline(&self) -> PipelineConfig {
        let mut cfg = self.pipeline.clone();
        if let Some(v) = self.pilot_lambda {
            cfg.pilot_lambda = PilotLambdaRule::Fixed { value: v };
        }
        if let Some(v) = self.clime_lambda {
            cfg.clime_lambda = ClimeLambdaRule::Fixed { value: v };
        }
        if let Some(t) = self.threshold_t {
            cfg.threshold = Some(t);
        }
        cfg
    }

    /// `<design>_<innovation>`, e.g. `banded_t10`.
    pub fn label(&self) -> String {
        format!("{}_{}", self.design.name(), self.innovation.label())
    }

    pub fn hypothesis(&self, truth: &TransitionMatrix) -> DMatrix<f64> {
        let mut b0 = truth.entries.clone();
        b0[(0, 0)] += self.power_delta;
        b0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub rep_index: usize,
    /// `sqrt(n) |beta_check - beta0|_max`.
    pub statistic: f64,
    pub c_alpha: f64,
    pub reject: bool,
    pub p_value: f64,
    /// Whether every entry of the true matrix lies in its simultaneous interval.
    pub covered: bool,
    pub psd_clip_magnitude: f64,
    pub w_draws: Vec<f64>,
}

/// One end-to-end replication; deterministic in `(config, rep_index)`.
pub fn run_replication(config: &ExperimentConfig, rep_index: usize) -> Result<ReplicationRecord> {
    config.validate()?;
    let truth = config.transition()?;
    run_replication_with(config, &truth, &config.effective_pipeline(), rep_index)
}

fn run_replication_with(
    config: &ExperimentConfig,
    truth: &TransitionMatrix,
    pipeline: &PipelineConfig,
    rep_index: usize,
) -> Result<ReplicationRecord> {
    let r = rep_index as u64;
    let sample = simulate(
        truth,
        &config.innovation,
        config.n,
        None,
        derive_seed(config.master_seed, Domain::Replication, r),
    )?;
    let out = fit(&sample, pipeline)?;
    let draws = bootstrap_draws(
        &out.covariance,
        config.bootstrap_draws,
        derive_seed(config.master_seed, Domain::Bootstrap, r),
    );
    let c = critical_value(&draws, config.alpha)?;
    let beta0 = config.hypothesis(truth);
    let statistic = statistic_of(&out.estimate.beta_check, &beta0, out.estimate.n)?;
    let at_truth = statistic_of(&out.estimate.beta_check, &truth.entries, out.estimate.n)?;
    Ok(ReplicationRecord {
        rep_index,
        statistic,
        c_alpha: c,
        reject: statistic > c,
        p_value: monte_carlo_p_value(&draws, statistic),
        covered: at_truth <= c,
        psd_clip_magnitude: out.covariance.psd_clip_magnitude,
        w_draws: draws,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub rep_index: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub records: Vec<ReplicationRecord>,
    pub failures: Vec<ReplicationFailure>,
}

/// Row of the size/coverage table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub design: String,
    pub innovation: String,
    pub n: usize,
    pub p: usize,
    pub replications: usize,
    pub alpha: f64,
    pub size: f64,
    pub coverage: f64,
    pub mean_critical_value: f64,
    pub ks_distance: f64,
    pub failures: usize,
}

impl ExperimentResult {
    pub fn statistics(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.statistic).collect()
    }

    pub fn pooled_draws(&self) -> Vec<f64> {
        self.records.iter().flat_map(|r| r.w_draws.iter().copied()).collect()
    }

    pub fn failure_rate(&self) -> f64 {
        self.failures.len() as f64 / self.config.replications as f64
    }

    /// Rejection rate over successful replications.
    pub fn rejection_rate(&self) -> f64 {
        rate(self.records.iter().map(|r| r.reject))
    }

    pub fn coverage(&self) -> f64 {
        rate(self.records.iter().map(|r| r.covered))
    }

    pub fn ks_distance(&self) -> Result<f64> {
        ks_two_sample(&self.statistics(), &self.pooled_draws())
    }

    pub fn qq(&self) -> Result<Vec<(f64, f64)>> {
        qq_data(&self.statistics(), &self.pooled_draws())
    }

    pub fn summary(&self) -> SummaryRow {
        let cs: Vec<f64> = self.records.iter().map(|r| r.c_alpha).collect();
        SummaryRow {
            label: self.config.label(),
            design: self.config.design.name().into(),
            innovation: self.config.innovation.label(),
            n: self.config.n,
            p: self.config.p,
            replications: self.config.replications,
            alpha: self.config.alpha,
            size: self.rejection_rate(),
            coverage: self.coverage(),
            mean_critical_value: if cs.is_empty() { f64::NAN } else { cs.iter().sum::<f64>() / cs.len() as f64 },
            ks_distance: self.ks_distance().unwrap_or(f64::NAN),
            failures: self.failures.len(),
        }
    }
}

fn rate(flags: impl Iterator<Item = bool>) -> f64 {
    let (mut hit, mut total) = (0usize, 0usize);
    for f in flags {
        total += 1;
        hit += f as usize;
    }
    if total == 0 {
        f64::NAN
    } else {
        hit as f64 / total as f64
    }
}

/// Runs all replications in parallel; failed replications are recorded, not fatal.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let truth = config.transition()?;
    let pipeline = config.effective_pipeline();
    let outcomes: Vec<std::result::Result<ReplicationRecord, ReplicationFailure>> = (0..config.replications)
        .into_par_iter()
        .map(|r| {
            run_replication_with(config, &truth, &pipeline, r).map_err(|e| ReplicationFailure {
                rep_index: r,
                message: e.to_string(),
            })
        })
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => records.push(r),
            Err(f) => failures.push(f),
        }
    }
    Ok(ExperimentResult {
        config: config.clone(),
        records,
        failures,
    })
}

/// Paired type-7 quantiles of both samples at `(i - 0.5) / R`, `i = 1..R`.
pub fn qq_data(statistics: &[f64], w_pool: &[f64]) -> Result<Vec<(f64, f64)>> {
    if statistics.is_empty() {
        return Err(Error::EmptyInput("statistics"));
    }
    if w_pool.is_empty() {
        return Err(Error::EmptyInput("bootstrap draws"));
    }
    let r = statistics.len();
    let levels: Vec<f64> = (1..=r).map(|i| (i as f64 - 0.5) / r as f64).collect();
    let a = quantiles(statistics, &levels)?;
    let b = quantiles(w_pool, &levels)?;
    Ok(a.into_iter().zip(b).collect())
}

/// Runs each config and summarizes it.
pub fn size_coverage_table(configs: &[ExperimentConfig]) -> Result<Vec<SummaryRow>> {
    configs.iter().map(|c| run_experiment(c).map(|r| r.summary())).collect()
}
