//! Multiplier bootstrap for the max statistic. The bootstrap covariance is
//! `D_hat = M (x) K`; draws use the factor roots and never form `D_hat`.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clime::PrecisionEstimate;
use crate::debias::{statistic_of, DebiasedEstimate};
use crate::linalg::{ensure_dim, kron, max_abs, psd_root, symmetrize};
use crate::moments::{MuEstimate, WeightedMoments};
use crate::rng::{substream, Domain};
use crate::{Error, Result};

/// Clip tolerance relative to the trace of the factor being repaired.
pub const CLIP_TOLERANCE: f64 = 1e-6;

pub const DEFAULT_BOOTSTRAP_DRAWS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapCovariance {
    /// `M_jk = psi_cross_jk / (mu_hat_j mu_hat_k)`.
    pub m_factor: DMatrix<f64>,
    /// `K = Omega_x S_x Omega_x^T`.
    pub k_factor: DMatrix<f64>,
    pub m_root: DMatrix<f64>,
    pub k_root: DMatrix<f64>,
    /// Largest magnitude of a negative eigenvalue removed from either factor.
    pub psd_clip_magnitude: f64,
}

impl BootstrapCovariance {
    /// Builds the factors directly from `M` and `K`.
    pub fn from_factors(m_factor: DMatrix<f64>, k_factor: DMatrix<f64>) -> Result<Self> {
        ensure_dim("K dimension", m_factor.nrows(), k_factor.nrows())?;
        let m_factor = symmetrize(&m_factor);
        let k_factor = symmetrize(&k_factor);
        let (m_root, m_clip) = psd_root(&m_factor);
        check_clip("M", m_clip, m_factor.trace())?;
        let (k_root, k_clip) = psd_root(&k_factor);
        check_clip("K", k_clip, k_factor.trace())?;
        Ok(Self {
            m_factor,
            k_factor,
            m_root,
            k_root,
            psd_clip_magnitude: m_clip.max(k_clip),
        })
    }

    pub fn p(&self) -> usize {
        self.m_factor.nrows()
    }

    /// Dense `p^2 x p^2` matrix `M (x) K`; only sensible for small `p`.
    pub fn dense(&self) -> DMatrix<f64> {
        kron(&self.m_factor, &self.k_factor)
    }

    /// One multiplier draw as a `p x p` matrix whose row `j` is the `beta_j` block.
    /// Rows have covariance `M_jk K` across blocks.
    pub fn draw_matrix<R: rand::Rng>(&self, rng: &mut R) -> DMatrix<f64> {
        let p = self.p();
        let g = DMatrix::from_fn(p, p, |_, _| StandardNormal.sample(rng));
        &self.m_root * g * self.k_root.transpose()
    }
}

fn check_clip(factor: &'static str, magnitude: f64, trace: f64) -> Result<()> {
    if magnitude > CLIP_TOLERANCE * trace.abs() {
        return Err(Error::ExcessiveClip {
            factor,
            magnitude,
            trace,
        });
    }
    Ok(())
}

pub fn build_dhat_factors(
    precision: &PrecisionEstimate,
    moments: &WeightedMoments,
    mu: &MuEstimate,
    psi_cross: &DMatrix<f64>,
) -> Result<BootstrapCovariance> {
    let p = precision.omega.nrows();
    ensure_dim("moments dimension", p, moments.s_x_hat.nrows())?;
    ensure_dim("mu_hat length", p, mu.mu_hat.len())?;
    ensure_dim("psi cross dimension", p, psi_cross.nrows())?;
    mu.require_above_floor()?;
    let m = DMatrix::from_fn(p, p, |j, k| psi_cross[(j, k)] / (mu.mu_hat[j] * mu.mu_hat[k]));
    let omega = &precision.omega;
    let k = omega * &moments.s_x_hat * omega.transpose();
    BootstrapCovariance::from_factors(m, k)
}

/// `W = |D_hat^{1/2} eta|_inf` for one Gaussian draw.
pub fn sample_w<R: rand::Rng>(cov: &BootstrapCovariance, rng: &mut R) -> f64 {
    max_abs(&cov.draw_matrix(rng))
}

/// `B` draws of `W`, draw `b` on its own sub-stream of `seed`.
pub fn bootstrap_draws(cov: &BootstrapCovariance, b: usize, seed: u64) -> Vec<f64> {
    (0..b)
        .into_par_iter()
        .map(|idx| {
            let mut rng = substream(seed, Domain::Bootstrap, idx as u64);
            sample_w(cov, &mut rng)
        })
        .collect()
}

/// The `ceil(B (1 - alpha))`-th order statistic of the draws.
pub fn critical_value(w_draws: &[f64], alpha: f64) -> Result<f64> {
    if w_draws.is_empty() {
        return Err(Error::EmptyDraws);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("alpha", "must lie in (0, 1)"));
    }
    let mut sorted = w_draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let b = sorted.len();
    // guard against 100 * 0.95 = 95.00000000000001
    let rank = ((b as f64) * (1.0 - alpha) - 1e-9).ceil() as usize;
    Ok(sorted[rank.clamp(1, b) - 1])
}

/// `(1 + #{W_b >= statistic}) / (B + 1)`.
pub fn monte_carlo_p_value(w_draws: &[f64], statistic: f64) -> f64 {
    let exceed = w_draws.iter().filter(|w| **w >= statistic).count();
    (1 + exceed) as f64 / (w_draws.len() + 1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: f64,
    pub critical_value: f64,
    pub alpha: f64,
    pub reject_global: bool,
    /// `(j, k)` with `sqrt(n) |beta_check_jk - beta0_jk| > critical_value`.
    pub rejected_entries: Vec<(usize, usize)>,
    pub p_value: f64,
    pub w_draws: Vec<f64>,
    pub seed: u64,
    pub bootstrap_draws: usize,
    pub psd_clip_magnitude: f64,
}

/// Simultaneous test of `H0: beta = beta0` over all `p^2` entries.
pub fn simultaneous_test(
    estimate: &DebiasedEstimate,
    beta0: &DMatrix<f64>,
    cov: &BootstrapCovariance,
    b: usize,
    alpha: f64,
    seed: u64,
) -> Result<TestReport> {
    let draws = bootstrap_draws(cov, b, seed);
    test_with_draws(&estimate.beta_check, estimate.n, beta0, draws, alpha, seed, cov.psd_clip_magnitude)
}

pub(crate) fn test_with_draws(
    beta_check: &DMatrix<f64>,
    n: usize,
    beta0: &DMatrix<f64>,
    w_draws: Vec<f64>,
    alpha: f64,
    seed: u64,
    psd_clip_magnitude: f64,
) -> Result<TestReport> {
    let statistic = statistic_of(beta_check, beta0, n)?;
    let c = critical_value(&w_draws, alpha)?;
    let root_n = (n as f64).sqrt();
    let p = beta_check.nrows();
    let mut rejected_entries = Vec::new();
    for j in 0..p {
        for k in 0..p {
            if root_n * (beta_check[(j, k)] - beta0[(j, k)]).abs() > c {
                rejected_entries.push((j, k));
            }
        }
    }
    Ok(TestReport {
        statistic,
        critical_value: c,
        alpha,
        reject_global: statistic > c,
        rejected_entries,
        p_value: monte_carlo_p_value(&w_draws, statistic),
        bootstrap_draws: w_draws.len(),
        w_draws,
        seed,
        psd_clip_magnitude,
    })
}

/// Simultaneous intervals `beta_check_jk -/+ c(alpha) / sqrt(n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceIntervals {
    pub lower: DMatrix<f64>,
    pub upper: DMatrix<f64>,
    pub half_width: f64,
    pub critical_value: f64,
    pub alpha: f64,
}

impl ConfidenceIntervals {
    pub fn from_critical_value(beta_check: &DMatrix<f64>, n: usize, c: f64, alpha: f64) -> Self {
        let half_width = c / (n as f64).sqrt();
        Self {
            lower: beta_check.add_scalar(-half_width),
            upper: beta_check.add_scalar(half_width),
            half_width,
            critical_value: c,
            alpha,
        }
    }

    /// True iff every entry of `beta` lies in its interval.
    pub fn covers(&self, beta: &DMatrix<f64>) -> bool {
        beta.shape() == self.lower.shape()
            && beta
                .iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(b, (lo, hi))| lo <= b && b <= hi)
    }
}

pub fn simultaneous_ci(
    estimate: &DebiasedEstimate,
    cov: &BootstrapCovariance,
    b: usize,
    alpha: f64,
    seed: u64,
) -> Result<ConfidenceIntervals> {
    let draws = bootstrap_draws(cov, b, seed);
    let c = critical_value(&draws, alpha)?;
    Ok(ConfidenceIntervals::from_critical_value(&estimate.beta_check, estimate.n, c, alpha))
}
