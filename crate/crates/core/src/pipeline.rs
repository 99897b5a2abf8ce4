//! End-to-end fit: weights, pilot, moments, CLIME, de-biasing, bootstrap factors.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{
    bootstrap_draws, build_dhat_factors, critical_value, simultaneous_test, BootstrapCovariance,
    ConfidenceIntervals, TestReport,
};
use crate::clime::{clime_with, data_driven_lambda_n, default_lambda_n, ClimeOptions, PrecisionEstimate};
use crate::debias::{debias_on, DebiasOptions, DebiasedEstimate};
use crate::linalg::norm_l1;
use crate::loss::{LossKind, RobustLossSpec, WeightConfig, WeightedDesign};
use crate::model::{spectral_decay_index, spectral_radius, VarSample, DEFAULT_DECAY_THRESHOLD};
use crate::moments::{psi_cross_moment, WeightedMoments};
use crate::pilot::{bic, default_pilot_lambda, fit_all_on, PilotFit, SolverOptions};
use crate::Result;

/// How the pilot penalty is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum PilotLambdaRule {
    Fixed { value: f64 },
    /// `c * T * sqrt(ln p / n)`.
    Scaled { c: f64 },
    /// BIC over a log-spaced grid of `scaled` constants.
    Bic { c_min: f64, c_max: f64, grid: usize },
}

/// How the CLIME tuning parameter is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClimeLambdaRule {
    Fixed { value: f64 },
    /// `c * sqrt(ln p / n)`.
    DataDriven { c: f64 },
    /// `c * proxy * gamma * tau^2 * T^2 * (ln p)^{3/2} / sqrt(n)` with `tau`,
    /// `gamma` taken from the pilot estimate and `proxy` the largest column
    /// l1 norm of `Sigma_x_hat^{-1}` when it exists.
    Theory { c: f64 },
}

pub const DEFAULT_PILOT_C: f64 = 0.5;
pub const DEFAULT_CLIME_C: f64 = 0.5;
pub const DEFAULT_THRESHOLD_QUANTILE: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub loss: LossKind,
    /// Quantile of `|X_{i-1}|_inf` used as `T` unless `threshold` is set.
    pub threshold_quantile: f64,
    pub threshold: Option<f64>,
    pub pilot_lambda: PilotLambdaRule,
    pub clime_lambda: ClimeLambdaRule,
    pub solver: SolverOptions,
    pub clime: ClimeOptions,
    pub debias: DebiasOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::default(),
            threshold_quantile: DEFAULT_THRESHOLD_QUANTILE,
            threshold: None,
            pilot_lambda: PilotLambdaRule::Scaled { c: DEFAULT_PILOT_C },
            clime_lambda: ClimeLambdaRule::DataDriven { c: DEFAULT_CLIME_C },
            solver: SolverOptions::default(),
            clime: ClimeOptions::default(),
            debias: DebiasOptions::default(),
        }
    }
}

impl PipelineConfig {
    pub fn weight_config(&self, sample: &VarSample) -> Result<WeightConfig> {
        match self.threshold {
            Some(t) => WeightConfig::new(t),
            None => WeightConfig::from_quantile(sample, self.threshold_quantile),
        }
    }

    pub fn loss_spec(&self) -> RobustLossSpec {
        RobustLossSpec::new(self.loss)
    }
}

/// Every intermediate of one fit.
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub weight: WeightConfig,
    pub pilot: PilotFit,
    pub moments: WeightedMoments,
    pub precision: PrecisionEstimate,
    pub estimate: DebiasedEstimate,
    pub psi_cross: DMatrix<f64>,
    pub covariance: BootstrapCovariance,
}

fn pilot_fit(
    design: &WeightedDesign,
    sample: &VarSample,
    cfg: &WeightConfig,
    config: &PipelineConfig,
) -> Result<PilotFit> {
    let spec = config.loss_spec();
    let (n, p) = (design.n(), design.p());
    match &config.pilot_lambda {
        PilotLambdaRule::Fixed { value } => fit_all_on(design, *value, &spec, &config.solver, None),
        PilotLambdaRule::Scaled { c } => {
            fit_all_on(design, default_pilot_lambda(n, p, cfg, *c), &spec, &config.solver, None)
        }
        PilotLambdaRule::Bic { c_min, c_max, grid } => {
            let grid = (*grid).max(1);
            let mut best: Option<(f64, PilotFit)> = None;
            let mut warm: Option<DMatrix<f64>> = None;
            for g in 0..grid {
                let frac = if grid == 1 { 0.0 } else { g as f64 / (grid - 1) as f64 };
                let c = c_max * (c_min / c_max).powf(frac);
                let lambda = default_pilot_lambda(n, p, cfg, c);
                let fit = fit_all_on(design, lambda, &spec, &config.solver, warm.as_ref())?;
                warm = Some(fit.beta_hat.clone());
                let score = bic(&fit, sample, &spec, cfg);
                if best.as_ref().map_or(true, |(s, _)| score < *s) {
                    best = Some((score, fit));
                }
            }
            Ok(best.expect("grid is nonempty").1)
        }
    }
}

fn clime_lambda(
    rule: &ClimeLambdaRule,
    moments: &WeightedMoments,
    pilot: &PilotFit,
    cfg: &WeightConfig,
) -> f64 {
    let (n, p) = (moments.n_used, moments.sigma_x_hat.nrows());
    match rule {
        ClimeLambdaRule::Fixed { value } => *value,
        ClimeLambdaRule::DataDriven { c } => data_driven_lambda_n(n, p, *c),
        ClimeLambdaRule::Theory { c } => {
            let (tau, gamma) = match spectral_radius(&pilot.beta_hat) {
                Ok(r) if r < 1.0 => spectral_decay_index(&pilot.beta_hat, DEFAULT_DECAY_THRESHOLD)
                    .map(|d| (d.tau, d.gamma))
                    .unwrap_or((1, 1.0)),
                _ => (1, 1.0),
            };
            let proxy = moments
                .sigma_x_hat
                .clone()
                .try_inverse()
                .map(|inv| norm_l1(&inv))
                .filter(|v| v.is_finite())
                .unwrap_or(1.0);
            default_lambda_n(n, p, tau, gamma, cfg.threshold, *c, proxy)
        }
    }
}

/// Runs the estimation chain on `sample`.
pub fn fit(sample: &VarSample, config: &PipelineConfig) -> Result<FitOutput> {
    let weight = config.weight_config(sample)?;
    let spec = config.loss_spec();
    let design = WeightedDesign::new(sample, &weight);
    let pilot = pilot_fit(&design, sample, &weight, config)?;
    let moments = WeightedMoments::from_design(&design, &weight);
    let lambda_n = clime_lambda(&config.clime_lambda, &moments, &pilot, &weight);
    let precision = clime_with(&moments.sigma_x_hat, lambda_n, &config.clime)?;
    let estimate = debias_on(&design, &pilot, &precision, &spec, &weight, &config.debias)?;
    let psi_cross = psi_cross_moment(&pilot.residuals, &spec)?;
    let covariance = build_dhat_factors(&precision, &moments, &estimate.mu_hat, &psi_cross)?;
    Ok(FitOutput {
        weight,
        pilot,
        moments,
        precision,
        estimate,
        psi_cross,
        covariance,
    })
}

impl FitOutput {
    pub fn test(&self, beta0: &DMatrix<f64>, b: usize, alpha: f64, seed: u64) -> Result<TestReport> {
        simultaneous_test(&self.estimate, beta0, &self.covariance, b, alpha, seed)
    }

    pub fn intervals(&self, b: usize, alpha: f64, seed: u64) -> Result<ConfidenceIntervals> {
        let draws = bootstrap_draws(&self.covariance, b, seed);
        let c = critical_value(&draws, alpha)?;
        Ok(ConfidenceIntervals::from_critical_value(
            &self.estimate.beta_check,
            self.estimate.n,
            c,
            alpha,
        ))
    }
}
