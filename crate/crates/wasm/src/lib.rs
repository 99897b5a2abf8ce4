//! Browser bindings: loss curves, design matrices and a small Monte Carlo
//! qq experiment. Every export returns a JSON string so the same functions
//! can be exercised natively in tests.

use robvar::experiments::{banded_design, block_diagonal_design, run_experiment, Design, ExperimentConfig};
use robvar::io::matrix_rows;
use robvar::loss::{LossKind, RobustLossSpec};
use robvar::model::{simulate, InnovationSpec};
use serde::Serialize;
use wasm_bindgen::prelude::wasm_bindgen;

#[derive(Serialize)]
struct LossCurves {
    x: Vec<f64>,
    loss: Vec<f64>,
    psi: Vec<f64>,
    psi_prime: Vec<f64>,
    knot: f64,
}

#[derive(Serialize)]
struct DesignView {
    transition: Vec<Vec<f64>>,
    spectral_radius: f64,
    decay_index: usize,
    series: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct QqView {
    points: Vec<(f64, f64)>,
    size: f64,
    coverage: f64,
    ks_distance: f64,
    mean_critical_value: f64,
    failures: usize,
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

fn loss_kind(kind: u32) -> Result<LossKind, String> {
    match kind {
        1 => Ok(LossKind::SmoothedHuber1),
        2 => Ok(LossKind::SmoothedHuber2),
        _ => Err(format!("unknown loss kind {kind}; use 1 or 2")),
    }
}

/// Loss, psi and psi' of a smoothed Huber loss on `[-range, range]`.
#[wasm_bindgen]
pub fn loss_curves(kind: u32, range: f64, points: u32) -> Result<String, String> {
    let spec = RobustLossSpec::new(loss_kind(kind)?);
    let m = points.max(2) as usize;
    let x: Vec<f64> = (0..m).map(|i| -range + 2.0 * range * i as f64 / (m - 1) as f64).collect();
    to_json(&LossCurves {
        loss: x.iter().map(|v| spec.loss(*v)).collect(),
        psi: x.iter().map(|v| spec.psi(*v)).collect(),
        psi_prime: x.iter().map(|v| spec.psi_prime(*v)).collect(),
        knot: spec.knot(),
        x,
    })
}

fn design(name: &str, p: usize) -> Result<Design, String> {
    let s = robvar::experiments::default_bandwidth(p).min(p.saturating_sub(1)).max(1);
    match name {
        "banded" => Ok(Design::Banded { lambda: 0.5, s }),
        "block_diagonal" => Ok(Design::BlockDiagonal { s }),
        _ => Err(format!("unknown design `{name}`; use banded or block_diagonal")),
    }
}

/// A design matrix and one simulated trajectory with t(df) innovations.
#[wasm_bindgen]
pub fn design_sample(name: &str, p: u32, n: u32, df: f64, seed: u64) -> Result<String, String> {
    let p = p as usize;
    let a = match design(name, p)? {
        Design::Banded { lambda, s } => banded_design(p, s, lambda),
        Design::BlockDiagonal { s } => block_diagonal_design(p, s, seed),
    }
    .map_err(|e| e.to_string())?;
    let sample = simulate(&a, &InnovationSpec::student_t(df), n as usize, None, seed).map_err(|e| e.to_string())?;
    to_json(&DesignView {
        transition: matrix_rows(&a.entries),
        spectral_radius: a.spectral_radius,
        decay_index: a.decay_index,
        series: matrix_rows(&sample.series),
    })
}

/// Runs `replications` null replications and returns qq points of the max
/// statistic against the pooled bootstrap draws.
#[wasm_bindgen]
pub fn qq_experiment(
    name: &str,
    n: u32,
    p: u32,
    df: f64,
    replications: u32,
    draws: u32,
    alpha: f64,
    seed: u64,
) -> Result<String, String> {
    let config = ExperimentConfig {
        design: design(name, p as usize)?,
        n: n as usize,
        p: p as usize,
        innovation: InnovationSpec::student_t(df),
        replications: replications as usize,
        bootstrap_draws: draws as usize,
        alpha,
        master_seed: seed,
        ..Default::default()
    };
    let result = run_experiment(&config).map_err(|e| e.to_string())?;
    let summary = result.summary();
    to_json(&QqView {
        points: result.qq().map_err(|e| e.to_string())?,
        size: summary.size,
        coverage: summary.coverage,
        ks_distance: summary.ks_distance,
        mean_critical_value: summary.mean_critical_value,
        failures: summary.failures,
    })
}
