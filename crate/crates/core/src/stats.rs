//! Small empirical-distribution helpers used by the experiment driver.

use crate::linalg::quantile_sorted;
use crate::{Error, Result};

fn sorted_copy(data: &[f64], what: &'static str) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::EmptyInput(what));
    }
    if data.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("data", format!("{what} contains NaN")));
    }
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Type-7 (linear interpolation) sample quantile.
pub fn quantile(data: &[f64], q: f64) -> Result<f64> {
    Ok(quantile_sorted(&sorted_copy(data, "quantile input")?, q))
}

/// Type-7 quantiles at several levels, sorting once.
pub fn quantiles(data: &[f64], levels: &[f64]) -> Result<Vec<f64>> {
    let s = sorted_copy(data, "quantile input")?;
    Ok(levels.iter().map(|q| quantile_sorted(&s, *q)).collect())
}

pub fn median(data: &[f64]) -> Result<f64> {
    quantile(data, 0.5)
}

pub fn mean(data: &[f64]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyInput("mean input"));
    }
    Ok(data.iter().sum::<f64>() / data.len() as f64)
}

/// Two-sample Kolmogorov-Smirnov distance `sup_x |F_a(x) - F_b(x)|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    let a = sorted_copy(a, "first sample")?;
    let b = sorted_copy(b, "second sample")?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// One-sample KS distance against Uniform(0, 1).
pub fn ks_uniform(data: &[f64]) -> Result<f64> {
    let s = sorted_copy(data, "sample")?;
    let n = s.len() as f64;
    Ok(s.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = x.clamp(0.0, 1.0);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max))
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "regression inputs",
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::EmptyInput("regression needs two points"));
    }
    let mx = mean(x)?;
    let my = mean(y)?;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    Ok(sxy / sxx)
}
