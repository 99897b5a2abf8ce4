//! Dense two-phase tableau simplex for small linear programs
//!
//! ```text
//! minimize c^T x  subject to  A x <= b,  x >= 0
//! ```
//!
//! `b` may have negative entries; those rows get an artificial variable in
//! phase one. Pivoting uses Dantzig's rule and falls back to Bland's rule
//! after a run of degenerate pivots.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

const PIVOT_TOL: f64 = 1e-11;
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub pivots: usize,
}

struct Tableau {
    t: DMatrix<f64>,
    basis: Vec<usize>,
    rows: usize,
    pivots: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.t[(i, self.t.ncols() - 1)]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let width = self.t.ncols();
        let piv = self.t[(row, col)];
        for c in 0..width {
            self.t[(row, c)] /= piv;
        }
        self.t[(row, col)] = 1.0;
        for r in 0..self.t.nrows() {
            if r == row {
                continue;
            }
            let f = self.t[(r, col)];
            if f == 0.0 {
                continue;
            }
            for c in 0..width {
                let v = self.t[(row, c)];
                if v != 0.0 {
                    self.t[(r, c)] -= f * v;
                }
            }
            self.t[(r, col)] = 0.0;
        }
        self.basis[row] = col;
        self.pivots += 1;
    }

    /// Runs simplex on the objective stored in row `obj` over columns `0..allowed`.
    fn optimize(&mut self, obj: usize, allowed: usize, max_pivots: usize) -> Result<()> {
        let mut degenerate = 0;
        loop {
            let bland = degenerate >= DEGENERATE_RUN;
            let mut enter = None;
            let mut best = -PIVOT_TOL;
            for c in 0..allowed {
                let rc = self.t[(obj, c)];
                if rc < best {
                    enter = Some(c);
                    if bland {
                        break;
                    }
                    best = rc;
                }
            }
            let Some(col) = enter else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.t[(r, col)];
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r).max(0.0) / a;
                    let better = match leave {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio - 1e-14
                                || (ratio <= lratio + 1e-14 && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((row, ratio)) = leave else {
                return Err(Error::NumericalFailure("linear program is unbounded".into()));
            };
            if ratio == 0.0 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(row, col);
            if self.pivots > max_pivots {
                return Err(Error::NotConverged {
                    context: "simplex".into(),
                    iterations: self.pivots,
                    residual: f64::NAN,
                });
            }
        }
    }
}

/// Solves `min c^T x` s.t. `A x <= b`, `x >= 0`.
pub fn solve_lp(c: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<LpSolution> {
    let (m, n) = a.shape();
    if c.len() != n || b.len() != m {
        return Err(Error::DimensionMismatch {
            context: "solve_lp",
            expected: n,
            actual: c.len(),
        });
    }
    let negative: Vec<usize> = (0..m).filter(|&i| b[i] < 0.0).collect();
    let n_art = negative.len();
    // columns: x (n) | slack (m) | artificial (n_art) | rhs
    let width = n + m + n_art + 1;
    let rhs_col = width - 1;
    // rows: constraints (m) | phase-2 objective | phase-1 objective
    let mut t = DMatrix::zeros(m + 2, width);
    let mut basis = vec![0; m];
    let mut art = 0;
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[(i, j)] = sign * a[(i, j)];
        }
        t[(i, n + i)] = sign;
        t[(i, rhs_col)] = sign * b[i];
        if b[i] < 0.0 {
            t[(i, n + m + art)] = 1.0;
            basis[i] = n + m + art;
            art += 1;
        } else {
            basis[i] = n + i;
        }
    }
    for j in 0..n {
        t[(m, j)] = c[j];
    }
    let p1 = m + 1;
    for k in 0..n_art {
        t[(p1, n + m + k)] = 1.0;
    }
    // price out the artificial basics
    for &i in &negative {
        for col in 0..width {
            t[(p1, col)] -= t[(i, col)];
        }
    }
    let mut tab = Tableau {
        t,
        basis,
        rows: m,
        pivots: 0,
    };
    let max_pivots = 50 * (m + n + n_art).max(10);
    if n_art > 0 {
        tab.optimize(p1, n + m + n_art, max_pivots)?;
        let infeas = -tab.t[(p1, rhs_col)];
        let scale = 1.0 + b.iter().fold(0.0_f64, |s, v| s.max(v.abs()));
        if infeas > 1e-9 * scale {
            return Err(Error::Infeasible(format!(
                "phase one ended with artificial sum {infeas:e}"
            )));
        }
        // drive remaining artificials out of the basis
        for r in 0..m {
            if tab.basis[r] >= n + m {
                if let Some(col) = (0..n + m).find(|&c| tab.t[(r, c)].abs() > PIVOT_TOL) {
                    tab.pivot(r, col);
                }
            }
        }
    }
    tab.optimize(m, n + m, max_pivots)?;
    let mut x = DVector::zeros(n);
    for (r, &col) in tab.basis.iter().enumerate() {
        if col < n {
            x[col] = tab.rhs(r).max(0.0);
        }
    }
    Ok(LpSolution {
        objective: c.dot(&x),
        x,
        pivots: tab.pivots,
    })
}
