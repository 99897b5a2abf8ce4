//! De-biased robust estimation and bootstrap-assisted simultaneous inference
//! for the transition matrix of a (possibly heavy-tailed) VAR(1) process.
//!
//! The pipeline is:
//!
//! 1. [`model`]: simulate `X_i = A X_{i-1} + e_i` and compute stability diagnostics.
//! 2. [`pilot`]: row-wise l1-penalized smoothed-Huber fit giving a pilot `beta_hat`.
//! 3. [`moments`]: weighted second moments, curvature scalars `mu_hat`, psi cross-moments.
//! 4. [`clime`]: sparse precision estimate of the weighted covariance.
//! 5. [`debias`]: one-step correction `beta_check = beta_hat + Omega_hat * S(beta_hat)`.
//! 6. [`bootstrap`]: Kronecker-factored multiplier bootstrap for the max statistic.
//!
//! [`experiments`] runs the Monte Carlo study and [`cli`] wires everything to files.

pub mod bootstrap;
pub mod cli;
pub mod clime;
pub mod debias;
pub mod error;
pub mod experiments;
pub mod io;
pub mod linalg;
pub mod loss;
pub mod lp;
pub mod model;
pub mod moments;
pub mod pilot;
pub mod pipeline;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use nalgebra::{DMatrix, DVector};

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
