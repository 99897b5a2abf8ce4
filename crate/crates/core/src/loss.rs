//! Smoothed Huber losses, the regressor weight `w(x) = min{1, T^3/|x|_inf^3}`
//! and the weighted empirical objective with its score and Hessian blocks.
//!
//! Sign convention: [`score`] returns `+(1/n) sum_i psi(res_ik) w(X_{i-1}) X_{i-1}`,
//! the negative calculus gradient of [`objective`]. The one-step correction in
//! [`crate::debias`] adds the precision-weighted score.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{ensure_dim, quantile_sorted};
use crate::model::VarSample;
use crate::{Error, Result};

const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `x^2/2 - |x|^3/6` inside `[-1, 1]`, linear with slope 1/2 outside.
    #[default]
    SmoothedHuber1,
    /// `x^2/2 - x^4/24` inside `[-sqrt 2, sqrt 2]`, linear with slope `2 sqrt 2 / 3` outside.
    SmoothedHuber2,
}

/// A convex, even, thrice a.e. differentiable robust loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RobustLossSpec {
    pub kind: LossKind,
}

impl RobustLossSpec {
    pub fn new(kind: LossKind) -> Self {
        Self { kind }
    }

    /// Location of the knot between the polynomial and linear branches.
    pub fn knot(&self) -> f64 {
        match self.kind {
            LossKind::SmoothedHuber1 => 1.0,
            LossKind::SmoothedHuber2 => SQRT2,
        }
    }

    /// `sup |psi|`.
    pub fn psi_bound(&self) -> f64 {
        match self.kind {
            LossKind::SmoothedHuber1 => 0.5,
            LossKind::SmoothedHuber2 => 2.0 * SQRT2 / 3.0,
        }
    }

    /// `sup |psi'|`.
    pub fn curvature_bound(&self) -> f64 {
        1.0
    }

    pub fn loss(&self, x: f64) -> f64 {
        let a = x.abs();
        match self.kind {
            LossKind::SmoothedHuber1 if a <= 1.0 => x * x / 2.0 - a * a * a / 6.0,
            LossKind::SmoothedHuber1 => a / 2.0 - 1.0 / 6.0,
            LossKind::SmoothedHuber2 if a <= SQRT2 => x * x / 2.0 - x * x * x * x / 24.0,
            LossKind::SmoothedHuber2 => (2.0 * SQRT2 / 3.0) * a - 0.5,
        }
    }

    pub fn psi(&self, x: f64) -> f64 {
        let a = x.abs();
        match self.kind {
            LossKind::SmoothedHuber1 if a <= 1.0 => x - x * a / 2.0,
            LossKind::SmoothedHuber1 => 0.5 * x.signum(),
            LossKind::SmoothedHuber2 if a <= SQRT2 => x - x * x * x / 6.0,
            LossKind::SmoothedHuber2 => (2.0 * SQRT2 / 3.0) * x.signum(),
        }
    }

    pub fn psi_prime(&self, x: f64) -> f64 {
        let a = x.abs();
        match self.kind {
            LossKind::SmoothedHuber1 => (1.0 - a).max(0.0),
            LossKind::SmoothedHuber2 if a <= SQRT2 => (1.0 - x * x / 2.0).max(0.0),
            LossKind::SmoothedHuber2 => 0.0,
        }
    }

    /// Second derivative of `psi`; at the knot the inner branch is used.
    pub fn psi_second(&self, x: f64) -> f64 {
        let a = x.abs();
        match self.kind {
            LossKind::SmoothedHuber1 if a <= 1.0 => {
                if x == 0.0 {
                    0.0
                } else {
                    -x.signum()
                }
            }
            LossKind::SmoothedHuber2 if a <= SQRT2 => -x,
            _ => 0.0,
        }
    }
}

/// Threshold `T` of the weight function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightConfig {
    pub threshold: f64,
}

impl WeightConfig {
    pub fn new(threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(Error::invalid("threshold", "T must be positive and finite"));
        }
        Ok(Self { threshold })
    }

    /// `T` = the `q`-quantile of `{|X_{i-1}|_inf : i = 1..n}`.
    pub fn from_quantile(sample: &VarSample, q: f64) -> Result<Self> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::invalid("threshold quantile", "must lie in (0, 1]"));
        }
        let mut norms: Vec<f64> = (0..sample.n)
            .map(|i| sample.series.row(i).iter().fold(0.0_f64, |m, v| m.max(v.abs())))
            .collect();
        norms.sort_by(f64::total_cmp);
        Self::new(quantile_sorted(&norms, q))
    }
}

/// `min{1, T^3 / |x|_inf^3}`.
pub fn weight<'a>(x: impl IntoIterator<Item = &'a f64>, cfg: &WeightConfig) -> f64 {
    let m = x.into_iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if m <= cfg.threshold {
        1.0
    } else {
        let r = cfg.threshold / m;
        r * r * r
    }
}

/// Regressors `X_0..X_{n-1}`, responses `X_1..X_n` and the regressor weights.
#[derive(Debug, Clone)]
pub struct WeightedDesign {
    pub regressors: DMatrix<f64>,
    pub responses: DMatrix<f64>,
    pub weights: DVector<f64>,
}

impl WeightedDesign {
    pub fn new(sample: &VarSample, cfg: &WeightConfig) -> Self {
        let (n, p) = (sample.n, sample.p);
        let regressors = sample.series.rows(0, n).into_owned();
        let responses = sample.series.rows(1, n).into_owned();
        let weights = DVector::from_iterator(n, regressors.row_iter().map(|r| weight(r.iter(), cfg)));
        debug_assert_eq!(regressors.ncols(), p);
        Self {
            regressors,
            responses,
            weights,
        }
    }

    pub fn n(&self) -> usize {
        self.regressors.nrows()
    }

    pub fn p(&self) -> usize {
        self.regressors.ncols()
    }

    fn check_beta(&self, beta: &DMatrix<f64>) -> Result<()> {
        ensure_dim("beta rows", self.p(), beta.nrows())?;
        ensure_dim("beta cols", self.p(), beta.ncols())
    }

    /// `res_ik = X_ik - X_{i-1}^T beta_k` as an `n x p` matrix.
    pub fn residuals(&self, beta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_beta(beta)?;
        Ok(&self.responses - &self.regressors * beta.transpose())
    }

    /// Residuals of equation `k` at coefficient vector `b`.
    pub fn row_residuals(&self, k: usize, b: &DVector<f64>) -> DVector<f64> {
        self.responses.column(k) - &self.regressors * b
    }

    /// `(1/n) sum_i l(res_ik) w_i`.
    pub fn row_objective(&self, spec: &RobustLossSpec, k: usize, b: &DVector<f64>) -> f64 {
        let res = self.row_residuals(k, b);
        let total: f64 = res
            .iter()
            .zip(self.weights.iter())
            .map(|(r, w)| spec.loss(*r) * w)
            .sum();
        total / self.n() as f64
    }

    /// Row objective and its score `(1/n) sum_i psi(res_ik) w_i X_{i-1}` together.
    pub fn row_objective_and_score(
        &self,
        spec: &RobustLossSpec,
        k: usize,
        b: &DVector<f64>,
    ) -> (f64, DVector<f64>) {
        let n = self.n() as f64;
        let res = self.row_residuals(k, b);
        let mut value = 0.0;
        let mut coef = DVector::zeros(res.len());
        for (i, r) in res.iter().enumerate() {
            let w = self.weights[i];
            value += spec.loss(*r) * w;
            coef[i] = spec.psi(*r) * w;
        }
        let score = self.regressors.tr_mul(&coef) / n;
        (value / n, score)
    }

    /// `(1/n) sum_i X_{i-1} X_{i-1}^T c_i` for per-observation coefficients `c`.
    pub(crate) fn weighted_gram(&self, coef: impl Iterator<Item = f64>) -> DMatrix<f64> {
        let mut scaled = self.regressors.clone();
        for (mut row, c) in scaled.row_iter_mut().zip(coef) {
            row *= c;
        }
        let g = self.regressors.tr_mul(&scaled) / self.n() as f64;
        (&g + g.transpose()) * 0.5
    }
}

/// `L_n(beta) = (1/n) sum_i sum_k l(X_ik - X_{i-1}^T beta_k) w(X_{i-1})`; rows of `beta` are `beta_k`.
pub fn objective(
    beta: &DMatrix<f64>,
    sample: &VarSample,
    spec: &RobustLossSpec,
    cfg: &WeightConfig,
) -> Result<f64> {
    let design = WeightedDesign::new(sample, cfg);
    let res = design.residuals(beta)?;
    let mut total = 0.0;
    for (i, row) in res.row_iter().enumerate() {
        let w = design.weights[i];
        total += row.iter().map(|r| spec.loss(*r)).sum::<f64>() * w;
    }
    Ok(total / design.n() as f64)
}

/// Row `k` is `S_k(beta) = (1/n) sum_i psi(res_ik) X_{i-1} w(X_{i-1})`, i.e. `-dL_n/dbeta_k`.
pub fn score(
    beta: &DMatrix<f64>,
    sample: &VarSample,
    spec: &RobustLossSpec,
    cfg: &WeightConfig,
) -> Result<DMatrix<f64>> {
    let design = WeightedDesign::new(sample, cfg);
    score_on(&design, beta, spec)
}

pub(crate) fn score_on(
    design: &WeightedDesign,
    beta: &DMatrix<f64>,
    spec: &RobustLossSpec,
) -> Result<DMatrix<f64>> {
    let mut psi = design.residuals(beta)?;
    for (i, mut row) in psi.row_iter_mut().enumerate() {
        let w = design.weights[i];
        for v in row.iter_mut() {
            *v = spec.psi(*v) * w;
        }
    }
    Ok(psi.tr_mul(&design.regressors) / design.n() as f64)
}

/// `k`-th diagonal block of the Hessian:
/// `(1/n) sum_i psi'(res_ik) X_{i-1} X_{i-1}^T w(X_{i-1})`.
pub fn hessian_block(
    beta: &DMatrix<f64>,
    sample: &VarSample,
    spec: &RobustLossSpec,
    cfg: &WeightConfig,
    k: usize,
) -> Result<DMatrix<f64>> {
    let design = WeightedDesign::new(sample, cfg);
    hessian_block_on(&design, beta, spec, k)
}

pub(crate) fn hessian_block_on(
    design: &WeightedDesign,
    beta: &DMatrix<f64>,
    spec: &RobustLossSpec,
    k: usize,
) -> Result<DMatrix<f64>> {
    if k >= design.p() {
        return Err(Error::IndexOutOfRange {
            index: k,
            dim: design.p(),
        });
    }
    let res = design.residuals(beta)?;
    Ok(design.weighted_gram(
        res.column(k)
            .iter()
            .zip(design.weights.iter())
            .map(|(r, w)| spec.psi_prime(*r) * w)
            .collect::<Vec<_>>()
            .into_iter(),
    ))
}
