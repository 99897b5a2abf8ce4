//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

pub(crate) fn ensure_square(a: &DMatrix<f64>) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::NonSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(a.nrows())
}

pub(crate) fn ensure_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}

/// Entrywise max norm `max_ij |a_ij|`.
pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `max_i sum_j |a_ij|`.
pub fn norm_inf(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `max_j sum_i |a_ij|`.
pub fn norm_l1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .singular_values()
        .iter()
        .fold(0.0_f64, |m, v| m.max(*v))
}

/// Kronecker product `a (x) b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// `(a + a^T) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Symmetric PSD square root after clipping negative eigenvalues at zero.
///
/// Returns the root `R = Q diag(sqrt(max(l, 0))) Q^T` (so `R R^T` is the
/// clipped matrix) and the magnitude of the most negative eigenvalue removed.
pub fn psd_root(a: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let n = a.nrows();
    if n == 0 {
        return (DMatrix::zeros(0, 0), 0.0);
    }
    let eig = SymmetricEigen::new(symmetrize(a));
    let mut clip = 0.0_f64;
    let roots = DVector::from_iterator(
        n,
        eig.eigenvalues.iter().map(|&l| {
            if l < 0.0 {
                clip = clip.max(-l);
                0.0
            } else {
                l.sqrt()
            }
        }),
    );
    let q = &eig.eigenvectors;
    let root = q * DMatrix::from_diagonal(&roots) * q.transpose();
    (symmetrize(&root), clip)
}

/// Linear-interpolated (type 7) sample quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norms_on_small_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 3.0, 4.0]);
        assert_eq!(max_abs(&a), 4.0);
        assert_eq!(norm_inf(&a), 7.0);
        assert_eq!(norm_l1(&a), 6.0);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -5.0]));
        assert!((spectral_norm(&d) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn psd_root_reconstructs_and_reports_clip() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let (r, clip) = psd_root(&a);
        assert_eq!(clip, 0.0);
        assert!(max_abs(&(&r * r.transpose() - &a)) < 1e-12);

        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        let (r, clip) = psd_root(&b);
        assert!((clip - 0.5).abs() < 1e-15);
        let expect = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(max_abs(&(&r * r.transpose() - expect)) < 1e-12);
    }

    #[test]
    fn quantile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert!((quantile_sorted(&v, 0.5) - 2.5).abs() < 1e-15);
    }
}
