//! Row-wise l1-penalized smoothed-Huber regression giving the pilot `beta_hat`.
//!
//! Each equation `k` solves
//! `min_b (1/n) sum_i l(X_ik - X_{i-1}^T b) w(X_{i-1}) + lambda |b|_1`
//! with a monotone accelerated proximal gradient method (function-value
//! restart, backtracking on the Lipschitz estimate).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::loss::{RobustLossSpec, WeightConfig, WeightedDesign};
use crate::model::VarSample;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Convergence is declared once the KKT residual drops below
    /// `10 * tol * max(|grad f(0)|_inf, tiny)`, so the rule is invariant to data scale.
    pub tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            tol: 1e-8,
        }
    }
}

impl SolverOptions {
    pub fn kkt_tol(&self) -> f64 {
        10.0 * self.tol
    }
}

/// Solution of one row problem.
#[derive(Debug, Clone, PartialEq)]
pub struct RowFit {
    pub beta: DVector<f64>,
    pub iterations: usize,
    /// Penalized objective at every accepted iterate (nonincreasing).
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PilotFit {
    /// Row `k` is `beta_hat_k`.
    pub beta_hat: DMatrix<f64>,
    pub lambda: f64,
    /// `res_ik = X_ik - X_{i-1}^T beta_hat_k`, `n x p`.
    pub residuals: DMatrix<f64>,
    pub iterations_per_row: Vec<usize>,
    pub objective_trace: Vec<Vec<f64>>,
    pub converged: Vec<bool>,
    pub kkt_residuals: Vec<f64>,
}

impl PilotFit {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|c| *c)
    }

    /// Fails with [`Error::NotConverged`] naming the first unconverged row.
    pub fn require_converged(&self) -> Result<()> {
        match self.converged.iter().position(|c| !c) {
            None => Ok(()),
            Some(k) => Err(Error::NotConverged {
                context: format!("pilot row {k}"),
                iterations: self.iterations_per_row[k],
                residual: self.kkt_residuals[k],
            }),
        }
    }
}

/// `c * T * sqrt(ln p / n)`.
pub fn default_pilot_lambda(n: usize, p: usize, cfg: &WeightConfig, c: f64) -> f64 {
    c * cfg.threshold * ((p as f64).ln() / n as f64).sqrt()
}

fn soft(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

fn l1(b: &DVector<f64>) -> f64 {
    b.iter().map(|v| v.abs()).sum()
}

/// Max-norm of the minimal subgradient of `f + lambda |.|_1` given `grad = grad f(b)`.
pub(crate) fn kkt_residual(b: &DVector<f64>, grad: &DVector<f64>, lambda: f64) -> f64 {
    b.iter()
        .zip(grad.iter())
        .map(|(bj, gj)| {
            if *bj != 0.0 {
                (gj + lambda * bj.signum()).abs()
            } else {
                (gj.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Lipschitz bound of the smooth part: `lambda_max(Sigma_x_hat)` (valid as `psi' <= 1`).
pub(crate) fn lipschitz_bound(design: &WeightedDesign) -> f64 {
    let gram = design.weighted_gram(design.weights.iter().copied());
    let top = SymmetricEigen::new(gram).eigenvalues.max();
    if top > 0.0 {
        top
    } else {
        1.0
    }
}

pub(crate) fn fit_row_on(
    design: &WeightedDesign,
    k: usize,
    lambda: f64,
    spec: &RobustLossSpec,
    opts: &SolverOptions,
    lipschitz: f64,
    warm: Option<&DVector<f64>>,
) -> RowFit {
    let p = design.p();
    let smooth = |b: &DVector<f64>| -> (f64, DVector<f64>) {
        let (v, score) = design.row_objective_and_score(spec, k, b);
        (v, -score)
    };
    let (_, g0) = smooth(&DVector::zeros(p));
    let stop = opts.kkt_tol() * g0.amax().max(f64::MIN_POSITIVE);
    let mut x = warm.cloned().unwrap_or_else(|| DVector::zeros(p));
    let (fx, gx) = smooth(&x);
    let mut big_f = fx + lambda * l1(&x);
    let mut trace = vec![big_f];
    let mut kkt = kkt_residual(&x, &gx, lambda);
    if kkt <= stop {
        return RowFit {
            beta: x,
            iterations: 0,
            objective_trace: trace,
            converged: true,
            kkt_residual: kkt,
        };
    }

    let mut lip = lipschitz;
    let mut y = x.clone();
    let mut t = 1.0_f64;
    for iter in 1..=opts.max_iter {
        let (fy, gy) = smooth(&y);
        let (z, fz, gz) = loop {
            let z = DVector::from_iterator(
                p,
                y.iter().zip(gy.iter()).map(|(yi, gi)| soft(yi - gi / lip, lambda / lip)),
            );
            let d = &z - &y;
            let (fz, gz) = smooth(&z);
            let model = fy + gy.dot(&d) + 0.5 * lip * d.norm_squared();
            if fz <= model + 1e-12 * fy.abs().max(1.0) || lip > 1e12 * lipschitz {
                break (z, fz, gz);
            }
            lip *= 2.0;
        };
        let big_fz = fz + lambda * l1(&z);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let kkt_z = kkt_residual(&z, &gz, lambda);
        // near the optimum the decrease drops below rounding; then accept on KKT progress
        let tie = big_fz <= big_f + 1e-12 * big_f.abs().max(f64::MIN_POSITIVE) && kkt_z < kkt;
        if big_fz <= big_f || tie {
            let x_prev = std::mem::replace(&mut x, z);
            big_f = big_f.min(big_fz);
            kkt = kkt_z;
            y = &x + (&x - &x_prev) * ((t - 1.0) / t_next);
            t = t_next;
        } else {
            // function-value restart from the incumbent
            y = x.clone();
            t = 1.0;
            let (_, gx) = smooth(&x);
            kkt = kkt_residual(&x, &gx, lambda);
        }
        trace.push(big_f);
        if kkt <= stop {
            return RowFit {
                beta: x,
                iterations: iter,
                objective_trace: trace,
                converged: true,
                kkt_residual: kkt,
            };
        }
    }
    RowFit {
        beta: x,
        iterations: opts.max_iter,
        objective_trace: trace,
        converged: false,
        kkt_residual: kkt,
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("pilot lambda", "must be finite and >= 0"));
    }
    Ok(())
}

/// Fits equation `k`. An unconverged solve returns its best iterate with `converged = false`.
pub fn fit_row(
    k: usize,
    sample: &VarSample,
    lambda: f64,
    spec: &RobustLossSpec,
    cfg: &WeightConfig,
    opts: &SolverOptions,
) -> Result<RowFit> {
    check_lambda(lambda)?;
    if k >= sample.p {
        return Err(Error::IndexOutOfRange { index: k, dim: sample.p });
    }
    let design = WeightedDesign::new(sample, cfg);
    let lip = lipschitz_bound(&design);
    Ok(fit_row_on(&design, k, lambda, spec, opts, lip, None))
}

pub(crate) fn fit_all_on(
    design: &WeightedDesign,
    lambda: f64,
    spec: &RobustLossSpec,
    opts: &SolverOptions,
    warm: Option<&DMatrix<f64>>,
) -> Result<PilotFit> {
    check_lambda(lambda)?;
    let p = design.p();
    let lip = lipschitz_bound(design);
    let rows: Vec<RowFit> = (0..p)
        .into_par_iter()
        .map(|k| {
            let start = warm.map(|w| w.row(k).transpose());
            fit_row_on(design, k, lambda, spec, opts, lip, start.as_ref())
        })
        .collect();
    let mut beta_hat = DMatrix::zeros(p, p);
    for (k, row) in rows.iter().enumerate() {
        beta_hat.set_row(k, &row.beta.transpose());
    }
    let residuals = design.residuals(&beta_hat)?;
    Ok(PilotFit {
        beta_hat,
        lambda,
        residuals,
        iterations_per_row: rows.iter().map(|r| r.iterations).collect(),
        converged: rows.iter().map(|r| r.converged).collect(),
        kkt_residuals: rows.iter().map(|r| r.kkt_residual).collect(),
        objective_trace: rows.into_iter().map(|r| r.objective_trace).collect(),
    })
}

/// Fits all `p` equations.
pub fn fit_all(
    sample: &VarSample,
    lambda: f64,
    spec: &RobustLossSpec,
    cfg: &WeightConfig,
    opts: &SolverOptions,
) -> Result<PilotFit> {
    let design = WeightedDesign::new(sample, cfg);
    fit_all_on(&design, lambda, spec, opts, None)
}

/// Fits along a decreasing lambda path with warm starts.
pub fn lambda_path(
    sample: &VarSample,
    lambdas: &[f64],
    spec: &RobustLossSpec,
    cfg: &WeightConfig,
    opts: &SolverOptions,
) -> Result<Vec<PilotFit>> {
    let design = WeightedDesign::new(sample, cfg);
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|a, b| lambdas[*b].total_cmp(&lambdas[*a]));
    let mut fits: Vec<Option<PilotFit>> = vec![None; lambdas.len()];
    let mut warm: Option<DMatrix<f64>> = None;
    for idx in order {
        let fit = fit_all_on(&design, lambdas[idx], spec, opts, warm.as_ref())?;
        warm = Some(fit.beta_hat.clone());
        fits[idx] = Some(fit);
    }
    Ok(fits.into_iter().flatten().collect())
}

/// BIC-type criterion `sum_k [n ln L_k(beta_hat_k) + df_k ln n]` with `df_k`
/// the number of nonzero coefficients in row `k`.
pub fn bic(fit: &PilotFit, sample: &VarSample, spec: &RobustLossSpec, cfg: &WeightConfig) -> f64 {
    let design = WeightedDesign::new(sample, cfg);
    let n = design.n() as f64;
    (0..design.p())
        .map(|k| {
            let b = fit.beta_hat.row(k).transpose();
            let loss = design.row_objective(spec, k, &b).max(f64::MIN_POSITIVE);
            let df = b.iter().filter(|v| **v != 0.0).count() as f64;
            n * loss.ln() + df * n.ln()
        })
        .sum()
}

/// Picks the lambda on `lambdas` minimizing [`bic`].
pub fn select_lambda_bic(
    sample: &VarSample,
    lambdas: &[f64],
    spec: &RobustLossSpec,
    cfg: &WeightConfig,
    opts: &SolverOptions,
) -> Result<PilotFit> {
    let fits = lambda_path(sample, lambdas, spec, cfg, opts)?;
    fits.into_iter()
        .map(|f| (bic(&f, sample, spec, cfg), f))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, f)| f)
        .ok_or(Error::EmptyInput("lambda grid"))
}
