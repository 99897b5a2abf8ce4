#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robvar::loss::{RobustLossSpec, WeightConfig};
use robvar::model::VarSample;
use robvar::{DMatrix, DVector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-scale..scale))
}

/// Random SPD matrix `G G^T / p + 0.2 I`.
pub fn random_spd(p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = random_matrix(p, p, 1.0, rng);
    &g * g.transpose() / p as f64 + DMatrix::identity(p, p) * 0.2
}

/// A series with heavy-ish tails that is not necessarily a VAR path.
pub fn random_sample(rows: usize, p: usize, seed: u64) -> VarSample {
    let mut r = rng(seed);
    let series = DMatrix::from_fn(rows, p, |_, _| {
        let u: f64 = r.gen_range(-1.0..1.0);
        2.0 * u * u * u + r.gen_range(-0.5..0.5)
    });
    VarSample::from_series(series).unwrap()
}

/// Weight computed straight from the definition.
pub fn naive_weight(x: &[f64], t: f64) -> f64 {
    let m = x.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if m == 0.0 {
        1.0
    } else {
        (t * t * t / (m * m * m)).min(1.0)
    }
}

/// Objective by explicit triple loop.
pub fn naive_objective(beta: &DMatrix<f64>, sample: &VarSample, spec: &RobustLossSpec, cfg: &WeightConfig) -> f64 {
    let (n, p) = (sample.n, sample.p);
    let mut total = 0.0;
    for i in 1..=n {
        let prev: Vec<f64> = (0..p).map(|j| sample.series[(i - 1, j)]).collect();
        let w = naive_weight(&prev, cfg.threshold);
        for k in 0..p {
            let fitted: f64 = (0..p).map(|j| beta[(k, j)] * prev[j]).sum();
            total += spec.loss(sample.series[(i, k)] - fitted) * w;
        }
    }
    total / n as f64
}

/// Central differences of `f` with respect to every entry of `beta`.
pub fn fd_gradient(beta: &DMatrix<f64>, h: f64, f: impl Fn(&DMatrix<f64>) -> f64) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(beta.nrows(), beta.ncols());
    for k in 0..beta.nrows() {
        for j in 0..beta.ncols() {
            let mut up = beta.clone();
            let mut down = beta.clone();
            up[(k, j)] += h;
            down[(k, j)] -= h;
            g[(k, j)] = (f(&up) - f(&down)) / (2.0 * h);
        }
    }
    g
}

/// Minimum of `|theta|_1` subject to `|sigma theta - e_j|_inf <= lambda` by
/// enumerating every vertex of the lifted polyhedron
/// `{(theta, t) : -t <= theta <= t, |sigma theta - e_j|_inf <= lambda}`.
/// Returns `None` when infeasible.
pub fn clime_vertex_oracle(sigma: &DMatrix<f64>, j: usize, lambda: f64) -> Option<(f64, DVector<f64>)> {
    let p = sigma.nrows();
    let dim = 2 * p;
    // rows a^T z <= b with z = (theta, t)
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    for i in 0..p {
        let mut a = DVector::zeros(dim);
        a[i] = 1.0;
        a[p + i] = -1.0;
        rows.push((a, 0.0));
        let mut a = DVector::zeros(dim);
        a[i] = -1.0;
        a[p + i] = -1.0;
        rows.push((a, 0.0));
    }
    for i in 0..p {
        let e = if i == j { 1.0 } else { 0.0 };
        let mut a = DVector::zeros(dim);
        let mut b = DVector::zeros(dim);
        for l in 0..p {
            a[l] = sigma[(i, l)];
            b[l] = -sigma[(i, l)];
        }
        rows.push((a, lambda + e));
        rows.push((b, lambda - e));
    }
    let m = rows.len();
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut idx: Vec<usize> = (0..dim).collect();
    loop {
        let a = DMatrix::from_fn(dim, dim, |r, c| rows[idx[r]].0[c]);
        let b = DVector::from_fn(dim, |r, _| rows[idx[r]].1);
        if let Some(z) = a.lu().solve(&b) {
            let feasible = rows.iter().all(|(a, b)| a.dot(&z) <= b + 1e-9);
            if feasible && z.iter().all(|v| v.is_finite()) {
                let obj: f64 = z.rows(p, p).iter().sum();
                if best.as_ref().map_or(true, |(o, _)| obj < *o) {
                    best = Some((obj, z.rows(0, p).into_owned()));
                }
            }
        }
        // next combination of `dim` indices out of `m`
        let mut i = dim;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] != i + m - dim {
                break;
            }
        }
        idx[i] += 1;
        for k in i + 1..dim {
            idx[k] = idx[k - 1] + 1;
        }
    }
}
