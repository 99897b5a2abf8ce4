//! CLIME estimation of the weighted precision matrix.
//!
//! Each column solves `min |theta|_1` s.t. `|Sigma theta - e_j|_inf <= lambda_n`.
//! Columns are combined with the min-magnitude symmetrization rule.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{ensure_square, spectral_norm};
use crate::lp::solve_lp;
use crate::{Error, Result};

/// Above this dimension `Auto` switches from simplex to the first-order solver.
pub const SIMPLEX_MAX_DIM: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClimeSolver {
    #[default]
    Auto,
    Simplex,
    FirstOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClimeOptions {
    pub tol: f64,
    pub solver: ClimeSolver,
    pub max_iter: usize,
}

impl Default for ClimeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            solver: ClimeSolver::Auto,
            max_iter: 200_000,
        }
    }
}

/// One CLIME column with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSolution {
    pub theta: DVector<f64>,
    /// `|Sigma theta - e_j|_inf - lambda_n`.
    pub feasibility_gap: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionEstimate {
    pub omega: DMatrix<f64>,
    /// Column solutions before symmetrization.
    pub theta: DMatrix<f64>,
    pub lambda_n: f64,
    pub feasibility_gap: f64,
    pub column_l1_norms: Vec<f64>,
    pub converged: Vec<bool>,
}

impl PrecisionEstimate {
    /// Largest number of nonzeros in a row of `omega`.
    pub fn row_sparsity(&self) -> usize {
        self.omega
            .row_iter()
            .map(|r| r.iter().filter(|v| **v != 0.0).count())
            .max()
            .unwrap_or(0)
    }
}

fn check_inputs(sigma_hat: &DMatrix<f64>, j: usize, lambda_n: f64) -> Result<usize> {
    let p = ensure_square(sigma_hat)?;
    if j >= p {
        return Err(Error::IndexOutOfRange { index: j, dim: p });
    }
    if !(lambda_n > 0.0 && lambda_n.is_finite()) {
        return Err(Error::invalid("lambda_n", "must be positive and finite"));
    }
    Ok(p)
}

fn constraint_gap(sigma_hat: &DMatrix<f64>, j: usize, theta: &DVector<f64>, lambda_n: f64) -> f64 {
    let r = sigma_hat * theta;
    let viol = r
        .iter()
        .enumerate()
        .map(|(i, v)| (v - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max);
    viol - lambda_n
}

/// Solves column `j` of CLIME.
pub fn clime_column(sigma_hat: &DMatrix<f64>, j: usize, lambda_n: f64, tol: f64) -> Result<DVector<f64>> {
    let opts = ClimeOptions {
        tol,
        ..ClimeOptions::default()
    };
    Ok(clime_column_with(sigma_hat, j, lambda_n, &opts)?.theta)
}

pub fn clime_column_with(
    sigma_hat: &DMatrix<f64>,
    j: usize,
    lambda_n: f64,
    opts: &ClimeOptions,
) -> Result<ColumnSolution> {
    let p = check_inputs(sigma_hat, j, lambda_n)?;
    let use_simplex = match opts.solver {
        ClimeSolver::Simplex => true,
        ClimeSolver::FirstOrder => false,
        ClimeSolver::Auto => p <= SIMPLEX_MAX_DIM,
    };
    if use_simplex {
        simplex_column(sigma_hat, j, lambda_n, opts.tol)
    } else {
        first_order_column(sigma_hat, j, lambda_n, opts)
    }
}

/// Split formulation `theta = u - v`, `u, v >= 0`, with `2p` inequality rows.
fn simplex_column(sigma_hat: &DMatrix<f64>, j: usize, lambda_n: f64, tol: f64) -> Result<ColumnSolution> {
    let p = sigma_hat.nrows();
    let mut a = DMatrix::zeros(2 * p, 2 * p);
    a.view_mut((0, 0), (p, p)).copy_from(sigma_hat);
    a.view_mut((0, p), (p, p)).copy_from(&(-sigma_hat));
    a.view_mut((p, 0), (p, p)).copy_from(&(-sigma_hat));
    a.view_mut((p, p), (p, p)).copy_from(sigma_hat);
    let mut b = DVector::from_element(2 * p, lambda_n);
    b[j] = 1.0 + lambda_n;
    b[p + j] = lambda_n - 1.0;
    let c = DVector::from_element(2 * p, 1.0);
    let sol = solve_lp(&c, &a, &b)?;
    let theta = DVector::from_iterator(p, (0..p).map(|i| sol.x[i] - sol.x[p + i]));
    let feasibility_gap = constraint_gap(sigma_hat, j, &theta, lambda_n);
    Ok(ColumnSolution {
        converged: feasibility_gap <= tol,
        feasibility_gap,
        theta,
    })
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

/// Primal-dual (Chambolle-Pock) iteration for `min |theta|_1 + I_box(Sigma theta)`.
fn first_order_column(
    sigma_hat: &DMatrix<f64>,
    j: usize,
    lambda_n: f64,
    opts: &ClimeOptions,
) -> Result<ColumnSolution> {
    let p = sigma_hat.nrows();
    let norm = spectral_norm(sigma_hat).max(1e-12);
    let step_primal = 0.99 / norm;
    let step_dual = 0.99 / norm;
    let center = |i: usize| if i == j { 1.0 } else { 0.0 };

    let mut theta = DVector::zeros(p);
    let mut theta_bar = DVector::zeros(p);
    let mut dual = DVector::<f64>::zeros(p);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let z = &dual + (sigma_hat * &theta_bar) * step_dual;
        // prox of sigma * g^*: z - sigma * proj_box(z / sigma)
        dual = DVector::from_iterator(
            p,
            z.iter().enumerate().map(|(i, zi)| {
                let c = center(i);
                let proj = (zi / step_dual).clamp(c - lambda_n, c + lambda_n);
                zi - step_dual * proj
            }),
        );
        let grad = sigma_hat.tr_mul(&dual);
        let next = DVector::from_iterator(
            p,
            theta
                .iter()
                .zip(grad.iter())
                .map(|(t, g)| soft(t - step_primal * g, step_primal)),
        );
        theta_bar = &next * 2.0 - &theta;
        theta = next;

        if iterations % 50 == 0 {
            let gap = constraint_gap(sigma_hat, j, &theta, lambda_n);
            let primal = theta.iter().map(|v| v.abs()).sum::<f64>();
            let scale = sigma_hat.tr_mul(&dual).amax().max(1.0);
            let y = &dual / scale;
            let dual_value = -(y[j] + lambda_n * y.iter().map(|v| v.abs()).sum::<f64>());
            let duality_gap = primal - dual_value;
            if gap <= opts.tol && duality_gap <= opts.tol * primal.max(1.0) {
                converged = true;
                break;
            }
        }
    }
    let feasibility_gap = constraint_gap(sigma_hat, j, &theta, lambda_n);
    Ok(ColumnSolution {
        theta,
        feasibility_gap,
        converged,
    })
}

/// `omega_ij = omega_ji` = whichever of `theta_ij`, `theta_ji` has smaller
/// magnitude. Ties keep the upper-triangular entry.
pub fn symmetrize_min_magnitude(theta: &DMatrix<f64>) -> DMatrix<f64> {
    let p = theta.nrows();
    DMatrix::from_fn(p, p, |i, j| {
        let (a, b) = if i <= j {
            (theta[(i, j)], theta[(j, i)])
        } else {
            (theta[(j, i)], theta[(i, j)])
        };
        if a.abs() <= b.abs() {
            a
        } else {
            b
        }
    })
}

/// Solves every column, then symmetrizes.
pub fn clime(sigma_hat: &DMatrix<f64>, lambda_n: f64, tol: f64) -> Result<PrecisionEstimate> {
    let opts = ClimeOptions {
        tol,
        ..ClimeOptions::default()
    };
    clime_with(sigma_hat, lambda_n, &opts)
}

pub fn clime_with(sigma_hat: &DMatrix<f64>, lambda_n: f64, opts: &ClimeOptions) -> Result<PrecisionEstimate> {
    let p = check_inputs(sigma_hat, 0, lambda_n)?;
    let columns: Vec<Result<ColumnSolution>> = (0..p)
        .into_par_iter()
        .map(|j| clime_column_with(sigma_hat, j, lambda_n, opts))
        .collect();
    let mut theta = DMatrix::zeros(p, p);
    let mut gap = f64::NEG_INFINITY;
    let mut converged = Vec::with_capacity(p);
    for (j, col) in columns.into_iter().enumerate() {
        let col = col.map_err(|e| match e {
            Error::Infeasible(msg) => Error::Infeasible(format!("CLIME column {j}: {msg}")),
            other => other,
        })?;
        theta.set_column(j, &col.theta);
        gap = gap.max(col.feasibility_gap);
        converged.push(col.converged);
    }
    let column_l1_norms = theta
        .column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum())
        .collect();
    Ok(PrecisionEstimate {
        omega: symmetrize_min_magnitude(&theta),
        theta,
        lambda_n,
        feasibility_gap: gap,
        column_l1_norms,
        converged,
    })
}

/// Rate-shaped tuning `c * proxy * gamma * tau^2 * T^2 * (ln p)^{3/2} / sqrt(n)`.
pub fn default_lambda_n(
    n: usize,
    p: usize,
    tau: usize,
    gamma: f64,
    threshold: f64,
    c: f64,
    omega_l1_proxy: f64,
) -> f64 {
    let log_p = (p as f64).ln();
    c * omega_l1_proxy * gamma * (tau * tau) as f64 * threshold * threshold * log_p.powf(1.5)
        / (n as f64).sqrt()
}

/// Data-driven fallback `c * sqrt(ln p / n)`.
pub fn data_driven_lambda_n(n: usize, p: usize, c: f64) -> f64 {
    c * ((p as f64).ln() / n as f64).sqrt()
}
