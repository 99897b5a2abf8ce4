//! Weighted empirical moments feeding CLIME and the bootstrap.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::loss::{RobustLossSpec, WeightConfig, WeightedDesign};
use crate::model::VarSample;
use crate::{Error, Result};

/// Default lower bound on each `mu_hat_k`.
pub const DEFAULT_MU_FLOOR: f64 = 1e-3;

/// `Sigma_x_hat` (w-weighted) and the w^2-weighted second moment of the regressors.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMoments {
    pub sigma_x_hat: DMatrix<f64>,
    pub s_x_hat: DMatrix<f64>,
    pub n_used: usize,
    pub threshold: f64,
}

impl WeightedMoments {
    pub fn new(sample: &VarSample, cfg: &WeightConfig) -> Self {
        let design = WeightedDesign::new(sample, cfg);
        Self::from_design(&design, cfg)
    }

    pub(crate) fn from_design(design: &WeightedDesign, cfg: &WeightConfig) -> Self {
        Self {
            sigma_x_hat: design.weighted_gram(design.weights.iter().copied()),
            s_x_hat: design.weighted_gram(design.weights.iter().map(|w| w * w)),
            n_used: design.n(),
            threshold: cfg.threshold,
        }
    }
}

/// `(1/n) sum_i X_{i-1} X_{i-1}^T w(X_{i-1})`.
pub fn weighted_covariance(sample: &VarSample, cfg: &WeightConfig) -> Result<DMatrix<f64>> {
    Ok(WeightedMoments::new(sample, cfg).sigma_x_hat)
}

/// `(1/n) sum_i X_{i-1} X_{i-1}^T w(X_{i-1})^2`.
pub fn weighted_covariance_sq(sample: &VarSample, cfg: &WeightConfig) -> Result<DMatrix<f64>> {
    Ok(WeightedMoments::new(sample, cfg).s_x_hat)
}

/// `mu_hat_k = (1/n) sum_i psi'(res_ik)` with entries below `floor` flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuEstimate {
    pub mu_hat: Vec<f64>,
    pub floor: f64,
}

impl MuEstimate {
    /// Indices with `mu_hat_k < floor`.
    pub fn flagged(&self) -> Vec<usize> {
        self.mu_hat
            .iter()
            .enumerate()
            .filter(|(_, m)| **m < self.floor)
            .map(|(k, _)| k)
            .collect()
    }

    /// Fails with [`Error::DegenerateMu`] when any entry is below the floor.
    pub fn require_above_floor(&self) -> Result<()> {
        let indices = self.flagged();
        if indices.is_empty() {
            return Ok(());
        }
        Err(Error::DegenerateMu {
            floor: self.floor,
            values: indices.iter().map(|&k| self.mu_hat[k]).collect(),
            indices,
        })
    }

    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.mu_hat)
    }
}

pub fn mu_hat(residuals: &DMatrix<f64>, spec: &RobustLossSpec, floor: f64) -> Result<MuEstimate> {
    if !(floor > 0.0) {
        return Err(Error::invalid("mu_floor", "must be positive"));
    }
    let n = residuals.nrows();
    if n == 0 {
        return Err(Error::EmptyInput("residuals"));
    }
    let mu_hat = residuals
        .column_iter()
        .map(|c| c.iter().map(|r| spec.psi_prime(*r)).sum::<f64>() / n as f64)
        .collect();
    Ok(MuEstimate { mu_hat, floor })
}

/// `(1/n) sum_i psi(res_ij) psi(res_ik)`.
pub fn psi_cross_moment(residuals: &DMatrix<f64>, spec: &RobustLossSpec) -> Result<DMatrix<f64>> {
    let n = residuals.nrows();
    if n == 0 {
        return Err(Error::EmptyInput("residuals"));
    }
    let psi = residuals.map(|r| spec.psi(r));
    let g = psi.tr_mul(&psi) / n as f64;
    Ok((&g + g.transpose()) * 0.5)
}
