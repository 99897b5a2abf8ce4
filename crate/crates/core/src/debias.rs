//! De-biased estimator `beta_check = beta_hat + Omega_hat S_n(beta_hat)` with
//! `Omega_hat = diag(1/mu_hat) (x) Omega_x`, applied block-wise.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clime::PrecisionEstimate;
use crate::linalg::{ensure_dim, ensure_square, max_abs};
use crate::loss::{hessian_block_on, score_on, RobustLossSpec, WeightConfig, WeightedDesign};
use crate::moments::{mu_hat, MuEstimate, DEFAULT_MU_FLOOR};
use crate::model::VarSample;
use crate::pilot::PilotFit;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DebiasOptions {
    pub mu_floor: f64,
    /// Proceed even if some pilot row did not reach its KKT tolerance.
    pub allow_unconverged: bool,
}

impl Default for DebiasOptions {
    fn default() -> Self {
        Self {
            mu_floor: DEFAULT_MU_FLOOR,
            allow_unconverged: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DebiasedEstimate {
    pub beta_check: DMatrix<f64>,
    pub beta_hat: DMatrix<f64>,
    pub mu_hat: MuEstimate,
    pub omega_x: DMatrix<f64>,
    pub score_at_pilot: DMatrix<f64>,
    pub threshold: f64,
    pub n: usize,
    /// `|beta_check - beta_hat|_max`.
    pub correction_max: f64,
    /// `max_k |I - Omega_x H_k(beta_hat) / mu_hat_k|_max`.
    pub delta_blk: f64,
}

/// Scalar summary written next to the `beta_check` CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebiasDiagnostics {
    pub n: usize,
    pub p: usize,
    pub threshold: f64,
    pub mu_hat: Vec<f64>,
    pub mu_floor: f64,
    pub correction_max: f64,
    pub delta_blk: f64,
    pub score_max: f64,
}

impl DebiasedEstimate {
    pub fn p(&self) -> usize {
        self.beta_check.nrows()
    }

    pub fn diagnostics(&self) -> DebiasDiagnostics {
        DebiasDiagnostics {
            n: self.n,
            p: self.p(),
            threshold: self.threshold,
            mu_hat: self.mu_hat.mu_hat.clone(),
            mu_floor: self.mu_hat.floor,
            correction_max: self.correction_max,
            delta_blk: self.delta_blk,
            score_max: max_abs(&self.score_at_pilot),
        }
    }
}

/// Row `k` of the result is `omega_x v_k / mu_hat_k`.
pub fn apply_block_omega(omega_x: &DMatrix<f64>, mu_hat: &DVector<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = ensure_square(omega_x)?;
    ensure_dim("mu_hat length", p, mu_hat.len())?;
    ensure_dim("v rows", p, v.nrows())?;
    ensure_dim("v cols", p, v.ncols())?;
    let bad: Vec<usize> = (0..p).filter(|&k| !(mu_hat[k] > 0.0)).collect();
    if !bad.is_empty() {
        return Err(Error::DegenerateMu {
            floor: 0.0,
            values: bad.iter().map(|&k| mu_hat[k]).collect(),
            indices: bad,
        });
    }
    // rows of v * omega_x^T are omega_x v_k
    let mut out = v * omega_x.transpose();
    for (k, mut row) in out.row_iter_mut().enumerate() {
        row /= mu_hat[k];
    }
    Ok(out)
}

pub(crate) fn debias_on(
    design: &WeightedDesign,
    pilot: &PilotFit,
    precision: &PrecisionEstimate,
    spec: &RobustLossSpec,
    cfg: &WeightConfig,
    opts: &DebiasOptions,
) -> Result<DebiasedEstimate> {
    let p = design.p();
    ensure_dim("pilot dimension", p, pilot.beta_hat.nrows())?;
    ensure_dim("precision dimension", p, precision.omega.nrows())?;
    if !opts.allow_unconverged {
        pilot.require_converged()?;
    }
    let mu = mu_hat(&pilot.residuals, spec, opts.mu_floor)?;
    mu.require_above_floor()?;
    let mu_vec = mu.as_vector();
    let score = score_on(design, &pilot.beta_hat, spec)?;
    let correction = apply_block_omega(&precision.omega, &mu_vec, &score)?;
    let beta_check = &pilot.beta_hat + &correction;
    if beta_check.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite de-biased estimate".into()));
    }
    let delta_blk = (0..p)
        .into_par_iter()
        .map(|k| -> Result<f64> {
            let h = hessian_block_on(design, &pilot.beta_hat, spec, k)?;
            let r = DMatrix::identity(p, p) - &precision.omega * h / mu_vec[k];
            Ok(max_abs(&r))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(DebiasedEstimate {
        correction_max: max_abs(&correction),
        beta_check,
        beta_hat: pilot.beta_hat.clone(),
        mu_hat: mu,
        omega_x: precision.omega.clone(),
        score_at_pilot: score,
        threshold: cfg.threshold,
        n: design.n(),
        delta_blk,
    })
}

pub fn debias(
    pilot: &PilotFit,
    sample: &VarSample,
    precision: &PrecisionEstimate,
    spec: &RobustLossSpec,
    cfg: &WeightConfig,
    opts: &DebiasOptions,
) -> Result<DebiasedEstimate> {
    let design = WeightedDesign::new(sample, cfg);
    debias_on(&design, pilot, precision, spec, cfg, opts)
}

/// `sqrt(n) |beta_check - beta0|_max`.
pub fn test_statistic(estimate: &DebiasedEstimate, beta0: &DMatrix<f64>, n: usize) -> Result<f64> {
    statistic_of(&estimate.beta_check, beta0, n)
}

pub(crate) fn statistic_of(beta_check: &DMatrix<f64>, beta0: &DMatrix<f64>, n: usize) -> Result<f64> {
    ensure_dim("beta0 rows", beta_check.nrows(), beta0.nrows())?;
    ensure_dim("beta0 cols", beta_check.ncols(), beta0.ncols())?;
    Ok((n as f64).sqrt() * max_abs(&(beta_check - beta0)))
}
