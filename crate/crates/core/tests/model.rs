mod common;

use robvar::experiments::{banded_design, block_diagonal_design, default_bandwidth, ExperimentConfig};
use robvar::linalg::max_abs;
use robvar::model::{
    simulate, spectral_decay_index, spectral_radius, stationary_autocov, InnovationSpec, TransitionMatrix,
};
use robvar::{DMatrix, Error};

fn raw_banded(p: usize, s: usize, lambda: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| {
        let d = i.abs_diff(j);
        if d <= s {
            lambda.powi(d as i32)
        } else {
            0.0
        }
    })
}

#[test]
fn banded_fixture() {
    // reference values from an independent dense eigensolver
    let raw = raw_banded(10, 2, 0.5);
    assert!((spectral_radius(&raw).unwrap() - 2.3887564194966466).abs() < 1e-10);
    let a = banded_design(10, default_bandwidth(10), 0.5).unwrap();
    assert!((a.entries[(0, 0)] - 0.2093139325211563).abs() < 1e-12);
    assert!((a.entries[(0, 1)] - 0.10465696626057815).abs() < 1e-12);
    assert!((a.entries[(0, 2)] - 0.05232848313028907).abs() < 1e-12);
    assert_eq!(a.entries[(0, 3)], 0.0);
    assert_eq!(a.decay_index, 2);
    assert!((a.decay_gamma - 1.0).abs() < 1e-12);
    let full = banded_design(6, 5, 0.7).unwrap();
    assert!(full.entries.iter().all(|v| *v > 0.0));
}

#[test]
fn block_diagonal_fixture() {
    let a = block_diagonal_design(10, 2, 7).unwrap();
    let expected = [-0.6682026939675055, -0.520223473199637, -0.32920991137173594, 0.12886318086949478, 0.38593739817509776];
    for (b, l) in expected.iter().enumerate() {
        assert_eq!(a.entries[(2 * b, 2 * b)], *l);
        assert_eq!(a.entries[(2 * b, 2 * b + 1)], l * l);
        assert_eq!(a.entries[(2 * b + 1, 2 * b)], 0.0);
    }
    assert!((a.spectral_radius - 0.6682026939675055).abs() < 1e-8);
    let grid = ExperimentConfig::default_grid(2018);
    let t = grid[2].transition().unwrap();
    assert_eq!(t.entries[(6, 6)], 0.7135802827369986);
}

#[test]
fn decay_index_examples() {
    let half = DMatrix::identity(3, 3) * 0.5;
    assert!((spectral_radius(&half).unwrap() - 0.5).abs() < 1e-12);
    let d = spectral_decay_index(&half, 0.5).unwrap();
    assert_eq!((d.tau, d.gamma), (2, 1.0));
    let shift = DMatrix::from_fn(5, 5, |i, j| if j == i + 1 { 1.0 } else { 0.0 });
    assert!(spectral_radius(&shift).unwrap() < 1e-6);
    assert_eq!(spectral_decay_index(&shift, 0.5).unwrap().tau, 5);
    assert_eq!(spectral_radius(&DMatrix::zeros(4, 4)).unwrap(), 0.0);
    assert!(matches!(
        TransitionMatrix::new(DMatrix::identity(2, 2) * 1.01),
        Err(Error::Unstable { .. })
    ));
    assert!(matches!(spectral_radius(&DMatrix::zeros(2, 3)), Err(Error::NonSquare { .. })));
}

#[test]
fn simulation_is_reproducible() {
    let a = banded_design(5, 1, 0.5).unwrap();
    let t5 = InnovationSpec::student_t(5.0);
    let x = simulate(&a, &t5, 50, None, 3).unwrap();
    assert_eq!(x, simulate(&a, &t5, 50, None, 3).unwrap());
    assert_ne!(x.series, simulate(&a, &t5, 50, None, 4).unwrap().series);
    assert_eq!(x.series.nrows(), 51);
    assert!(x.series.iter().all(|v| v.is_finite()));
    assert!(x.burn_in.unwrap() >= 200);
}

#[test]
fn long_run_covariance_matches_lyapunov_solution() {
    let a = TransitionMatrix::new(DMatrix::from_row_slice(2, 2, &[0.5, 0.3, -0.2, 0.4])).unwrap();
    let x = simulate(&a, &InnovationSpec::gaussian(1.0), 200_000, None, 5).unwrap();
    let n = x.series.nrows() as f64;
    let emp = x.series.tr_mul(&x.series) / n;
    let exact = stationary_autocov(&a.entries, &DMatrix::identity(2, 2)).unwrap();
    assert!(max_abs(&(emp - &exact)) < 0.03, "{exact}");
}

#[test]
fn innovation_json_schema() {
    let t: InnovationSpec = serde_json::from_str(r#"{"family": "student_t", "df": 5}"#).unwrap();
    assert_eq!(t, InnovationSpec::student_t(5.0));
    let g: InnovationSpec = serde_json::from_str(r#"{"family": "gaussian", "scale": [1.0, 2.0]}"#).unwrap();
    assert!((g.variance(1) - 4.0).abs() < 1e-12);
    assert!(serde_json::from_str::<InnovationSpec>(r#"{"family": "student_t"}"#).is_err());
    assert!(serde_json::from_str::<InnovationSpec>(r#"{"family": "gaussian", "df": 3}"#).is_err());
    assert!(serde_json::from_str::<InnovationSpec>(r#"{"family": "gaussian", "extra": 1}"#).is_err());
    let back: InnovationSpec = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
    assert_eq!(back, t);
    assert!(InnovationSpec::student_t(2.0).validate(3).is_err());
}
