//! VAR(1) processes: stability diagnostics, simulation and exact
//! second-moment oracles.

use nalgebra::{linalg::Schur, DMatrix};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::linalg::{ensure_dim, ensure_square, max_abs, norm_inf, spectral_norm};
use crate::rng::{substream, Domain};
use crate::{Error, Result};

/// Default threshold `rho` in the decay index `min{t : ||A^t|| < rho}`.
pub const DEFAULT_DECAY_THRESHOLD: f64 = 0.5;

/// Any simulated state larger than this aborts the simulation.
pub const OVERFLOW_GUARD: f64 = 1e12;

const MIN_BURN_IN: usize = 200;

/// Matrix norm used when computing the decay index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayNorm {
    /// Maximum absolute row sum.
    #[default]
    Infinity,
    /// Largest singular value.
    Spectral,
}

impl DecayNorm {
    fn eval(self, a: &DMatrix<f64>) -> f64 {
        match self {
            DecayNorm::Infinity => norm_inf(a),
            DecayNorm::Spectral => spectral_norm(a),
        }
    }
}

/// Iteration cap for the decay index when none is given: `max(10 p, 100)`.
pub fn default_decay_cap(p: usize) -> usize {
    (10 * p).max(100)
}

/// Output of [`spectral_decay_index`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayIndex {
    pub tau: usize,
    pub gamma: f64,
}

/// Spectral radius `max |lambda_i(A)|` via a real Schur decomposition.
///
/// When the QR iteration fails to converge (it can on exactly-zero or
/// defective inputs) the decomposition is retried on `A + sI` and the shift
/// is removed from the eigenvalues.
pub fn spectral_radius(a: &DMatrix<f64>) -> Result<f64> {
    let p = ensure_square(a)?;
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite matrix entry".into()));
    }
    if p == 0 || a.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let scale = norm_inf(a);
    for shift in [0.0, 0.5 * scale, 0.37 * scale] {
        let shifted = a + DMatrix::identity(p, p) * shift;
        if let Some(schur) = Schur::try_new(shifted, f64::EPSILON, 100_000) {
            return Ok(schur
                .complex_eigenvalues()
                .iter()
                .map(|z| (z.re - shift).hypot(z.im))
                .fold(0.0, f64::max));
        }
    }
    Err(Error::NumericalFailure("Schur decomposition did not converge".into()))
}

/// Decay index `tau = min{t >= 1 : ||A^t||_inf < threshold}` and
/// `gamma = max_{0 <= t < tau} ||A^t||_2`.
pub fn spectral_decay_index(a: &DMatrix<f64>, threshold: f64) -> Result<DecayIndex> {
    let p = ensure_square(a)?;
    spectral_decay_index_with(a, threshold, DecayNorm::Infinity, default_decay_cap(p))
}

/// [`spectral_decay_index`] with an explicit norm and iteration cap.
pub fn spectral_decay_index_with(
    a: &DMatrix<f64>,
    threshold: f64,
    norm: DecayNorm,
    cap: usize,
) -> Result<DecayIndex> {
    let p = ensure_square(a)?;
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid("threshold", "must lie in (0, 1)"));
    }
    let radius = spectral_radius(a)?;
    if radius >= 1.0 {
        return Err(Error::Unstable { radius });
    }
    let mut gamma = 1.0_f64.max(spectral_norm(&DMatrix::identity(p, p)));
    let mut power = a.clone();
    let mut trace = Vec::new();
    for t in 1..=cap {
        let nrm = norm.eval(&power);
        trace.push(nrm);
        if nrm < threshold {
            return Ok(DecayIndex { tau: t, gamma });
        }
        gamma = gamma.max(spectral_norm(&power));
        power = &power * a;
    }
    let keep = trace.len().saturating_sub(10);
    Err(Error::CapExceeded {
        cap,
        trace: trace.split_off(keep),
    })
}

/// A stable transition matrix together with its stability diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub entries: DMatrix<f64>,
    pub spectral_radius: f64,
    pub decay_index: usize,
    pub decay_gamma: f64,
    pub decay_threshold: f64,
}

impl TransitionMatrix {
    /// Validates stability and computes `(rho(A), tau, gamma)` at the default threshold.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        Self::with_threshold(entries, DEFAULT_DECAY_THRESHOLD)
    }

    pub fn with_threshold(entries: DMatrix<f64>, threshold: f64) -> Result<Self> {
        let radius = spectral_radius(&entries)?;
        if radius >= 1.0 {
            return Err(Error::Unstable { radius });
        }
        let decay = spectral_decay_index(&entries, threshold)?;
        Ok(Self {
            entries,
            spectral_radius: radius,
            decay_index: decay.tau,
            decay_gamma: decay.gamma,
            decay_threshold: threshold,
        })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }
}

/// Stacks a VAR(d) into its VAR(1) companion form.
pub fn companion_form(lags: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let first = lags.first().ok_or(Error::EmptyInput("lag matrices"))?;
    let p = ensure_square(first)?;
    for lag in lags {
        ensure_dim("companion_form rows", p, lag.nrows())?;
        ensure_dim("companion_form cols", p, lag.ncols())?;
    }
    let d = lags.len();
    if d == 1 {
        return Ok(first.clone());
    }
    let mut c = DMatrix::zeros(d * p, d * p);
    for (l, lag) in lags.iter().enumerate() {
        c.view_mut((0, l * p), (p, p)).copy_from(lag);
    }
    for l in 1..d {
        c.view_mut((l * p, (l - 1) * p), (p, p))
            .fill_with_identity();
    }
    Ok(c)
}

/// Innovation distribution family. All are symmetric about zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnovationFamily {
    Gaussian,
    StudentT { df: f64 },
    Laplace,
}

/// Innovation scale: one value for all coordinates or one per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scale {
    Common(f64),
    PerCoordinate(Vec<f64>),
}

impl Default for Scale {
    fn default() -> Self {
        Scale::Common(1.0)
    }
}

impl Scale {
    fn at(&self, k: usize) -> f64 {
        match self {
            Scale::Common(s) => *s,
            Scale::PerCoordinate(v) => v[k],
        }
    }

    fn values(&self) -> Vec<f64> {
        match self {
            Scale::Common(s) => vec![*s],
            Scale::PerCoordinate(v) => v.clone(),
        }
    }
}

/// Distribution of the i.i.d. innovation vectors `e_i`.
///
/// JSON form: `{"family": "student_t", "df": 5, "scale": 1.0, "standardize": false}`
/// with `family` one of `gaussian`, `student_t`, `laplace`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInnovation", into = "RawInnovation")]
pub struct InnovationSpec {
    pub family: InnovationFamily,
    pub scale: Scale,
    /// Rescale draws to unit variance before applying `scale`.
    pub standardize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum FamilyName {
    Gaussian,
    StudentT,
    Laplace,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInnovation {
    family: FamilyName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    df: Option<f64>,
    #[serde(default)]
    scale: Scale,
    #[serde(default)]
    standardize: bool,
}

impl TryFrom<RawInnovation> for InnovationSpec {
    type Error = String;

    fn try_from(raw: RawInnovation) -> std::result::Result<Self, String> {
        let family = match (raw.family, raw.df) {
            (FamilyName::StudentT, Some(df)) => InnovationFamily::StudentT { df },
            (FamilyName::StudentT, None) => return Err("student_t innovations need `df`".into()),
            (_, Some(_)) => return Err("`df` only applies to student_t innovations".into()),
            (FamilyName::Gaussian, None) => InnovationFamily::Gaussian,
            (FamilyName::Laplace, None) => InnovationFamily::Laplace,
        };
        Ok(Self {
            family,
            scale: raw.scale,
            standardize: raw.standardize,
        })
    }
}

impl From<InnovationSpec> for RawInnovation {
    fn from(spec: InnovationSpec) -> Self {
        let (family, df) = match spec.family {
            InnovationFamily::Gaussian => (FamilyName::Gaussian, None),
            InnovationFamily::StudentT { df } => (FamilyName::StudentT, Some(df)),
            InnovationFamily::Laplace => (FamilyName::Laplace, None),
        };
        Self {
            family,
            df,
            scale: spec.scale,
            standardize: spec.standardize,
        }
    }
}

impl InnovationSpec {
    pub fn gaussian(scale: f64) -> Self {
        Self {
            family: InnovationFamily::Gaussian,
            scale: Scale::Common(scale),
            standardize: false,
        }
    }

    pub fn student_t(df: f64) -> Self {
        Self {
            family: InnovationFamily::StudentT { df },
            scale: Scale::Common(1.0),
            standardize: false,
        }
    }

    pub fn laplace(scale: f64) -> Self {
        Self {
            family: InnovationFamily::Laplace,
            scale: Scale::Common(scale),
            standardize: false,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if let InnovationFamily::StudentT { df } = self.family {
            if !(df > 2.0 && df.is_finite()) {
                return Err(Error::invalid("innovation.df", "Student-t needs df > 2 for finite variance"));
            }
        }
        if let Scale::PerCoordinate(v) = &self.scale {
            ensure_dim("innovation.scale", p, v.len())?;
        }
        if self.scale.values().iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid("innovation.scale", "scales must be finite and >= 0"));
        }
        Ok(())
    }

    /// True when every coordinate has zero scale.
    pub fn is_degenerate(&self) -> bool {
        self.scale.values().iter().all(|s| *s == 0.0)
    }

    fn unit_factor(&self) -> f64 {
        if !self.standardize {
            return 1.0;
        }
        match self.family {
            InnovationFamily::Gaussian => 1.0,
            InnovationFamily::StudentT { df } => ((df - 2.0) / df).sqrt(),
            InnovationFamily::Laplace => std::f64::consts::FRAC_1_SQRT_2,
        }
    }

    /// Variance of one coordinate.
    pub fn variance(&self, k: usize) -> f64 {
        let base = match self.family {
            InnovationFamily::Gaussian => 1.0,
            InnovationFamily::StudentT { df } => df / (df - 2.0),
            InnovationFamily::Laplace => 2.0,
        };
        let s = self.scale.at(k) * self.unit_factor();
        base * s * s
    }

    pub fn label(&self) -> String {
        match self.family {
            InnovationFamily::Gaussian => "gaussian".into(),
            InnovationFamily::StudentT { df } => format!("t{df}"),
            InnovationFamily::Laplace => "laplace".into(),
        }
    }
}

/// Standard-scale draws for one innovation family.
pub(crate) struct InnovationSampler {
    family: InnovationFamily,
    student: Option<StudentT<f64>>,
    scales: Vec<f64>,
}

impl InnovationSampler {
    pub(crate) fn new(spec: &InnovationSpec, p: usize) -> Result<Self> {
        spec.validate(p)?;
        let student = match spec.family {
            InnovationFamily::StudentT { df } => Some(
                StudentT::new(df).map_err(|e| Error::invalid("innovation.df", e.to_string()))?,
            ),
            _ => None,
        };
        let unit = spec.unit_factor();
        let scales = (0..p).map(|k| spec.scale.at(k) * unit).collect();
        Ok(Self {
            family: spec.family,
            student,
            scales,
        })
    }

    pub(crate) fn draw<R: Rng>(&self, rng: &mut R, k: usize) -> f64 {
        let z: f64 = match self.family {
            InnovationFamily::Gaussian => StandardNormal.sample(rng),
            InnovationFamily::StudentT { .. } => self.student.as_ref().map_or(0.0, |t| t.sample(rng)),
            InnovationFamily::Laplace => {
                let e: f64 = Exp1.sample(rng);
                if rng.gen::<bool>() {
                    e
                } else {
                    -e
                }
            }
        };
        let s = self.scales[k];
        if s == 0.0 {
            0.0
        } else {
            s * z
        }
    }
}

/// An observed trajectory `X_0, ..., X_n` (rows of `series`).
#[derive(Debug, Clone, PartialEq)]
pub struct VarSample {
    pub series: DMatrix<f64>,
    pub n: usize,
    pub p: usize,
    pub innovation: Option<InnovationSpec>,
    pub seed: Option<u64>,
    pub burn_in: Option<usize>,
}

impl VarSample {
    /// Wraps an observed `(n+1) x p` series.
    pub fn from_series(series: DMatrix<f64>) -> Result<Self> {
        if series.nrows() < 2 {
            return Err(Error::invalid("series", "need at least two time points (n >= 1)"));
        }
        if series.ncols() == 0 {
            return Err(Error::invalid("series", "need at least one coordinate"));
        }
        if series.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("series", "all entries must be finite"));
        }
        Ok(Self {
            n: series.nrows() - 1,
            p: series.ncols(),
            series,
            innovation: None,
            seed: None,
            burn_in: None,
        })
    }
}

/// Default burn-in: the smallest `b` with `||A^b||_inf < 1e-8`, capped at
/// `10 tau ceil(ln n)` and floored at 200.
pub fn default_burn_in(a: &TransitionMatrix, n: usize) -> usize {
    let log_n = (n.max(2) as f64).ln().ceil() as usize;
    let cap = 10 * a.decay_index * log_n.max(1);
    let mut power = a.entries.clone();
    let mut b = 1;
    while b < cap && norm_inf(&power) >= 1e-8 {
        power = &power * &a.entries;
        b += 1;
    }
    b.min(cap).max(MIN_BURN_IN)
}

/// Simulates `X_i = A X_{i-1} + e_i` from `X = 0`, discarding `burn_in`
/// states and returning the next `n + 1`.
pub fn simulate(
    a: &TransitionMatrix,
    innovation: &InnovationSpec,
    n: usize,
    burn_in: Option<usize>,
    seed: u64,
) -> Result<VarSample> {
    if n == 0 {
        return Err(Error::invalid("n", "must be positive"));
    }
    if a.spectral_radius >= 1.0 {
        return Err(Error::Unstable {
            radius: a.spectral_radius,
        });
    }
    let p = a.dim();
    let sampler = InnovationSampler::new(innovation, p)?;
    let burn = burn_in.unwrap_or_else(|| default_burn_in(a, n));
    let mut rng = substream(seed, Domain::Innovations, 0);

    let mut series = DMatrix::zeros(n + 1, p);
    let mut state = vec![0.0; p];
    let mut next = vec![0.0; p];
    let total = burn + n + 1;
    for step in 1..=total {
        for (j, slot) in next.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (l, x) in state.iter().enumerate() {
                acc += a.entries[(j, l)] * x;
            }
            *slot = acc + sampler.draw(&mut rng, j);
        }
        std::mem::swap(&mut state, &mut next);
        if let Some((coord, value)) = state
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.abs() <= OVERFLOW_GUARD))
        {
            return Err(Error::Overflow {
                time: step,
                coord,
                value: *value,
            });
        }
        if step > burn {
            let row = step - burn - 1;
            for (j, x) in state.iter().enumerate() {
                series[(row, j)] = *x;
            }
        }
    }
    Ok(VarSample {
        series,
        n,
        p,
        innovation: Some(innovation.clone()),
        seed: Some(seed),
        burn_in: Some(burn),
    })
}

/// Stationary covariance `Gamma(0)` solving `Gamma = A Gamma A^T + Sigma_eps`
/// by the doubling recursion.
pub fn stationary_autocov(a: &DMatrix<f64>, sigma_eps: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = ensure_square(a)?;
    ensure_dim("stationary_autocov sigma_eps", p, sigma_eps.nrows())?;
    ensure_dim("stationary_autocov sigma_eps", p, sigma_eps.ncols())?;
    let radius = spectral_radius(a)?;
    if radius >= 1.0 {
        return Err(Error::Unstable { radius });
    }
    let mut gamma = sigma_eps.clone();
    let mut power = a.clone();
    for _ in 0..200 {
        let incr = &power * &gamma * power.transpose();
        gamma += &incr;
        power = &power * &power;
        if max_abs(&incr) <= 1e-17 * max_abs(&gamma).max(f64::MIN_POSITIVE) {
            return Ok((&gamma + gamma.transpose()) * 0.5);
        }
    }
    Err(Error::NumericalFailure("Lyapunov doubling did not converge".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::kron;

    #[test]
    fn radius_of_scaled_identity_and_zero() {
        let a = DMatrix::identity(3, 3) * 0.5;
        assert!((spectral_radius(&a).unwrap() - 0.5).abs() < 1e-14);
        assert_eq!(spectral_radius(&DMatrix::zeros(4, 4)).unwrap(), 0.0);
        assert!(matches!(
            spectral_radius(&DMatrix::zeros(2, 3)),
            Err(Error::NonSquare { .. })
        ));
    }

    #[test]
    fn radius_of_rotation_uses_complex_eigenvalues() {
        let (c, s) = (0.6_f64, 0.3_f64);
        let a = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let expect = (c * c + s * s).sqrt();
        assert!((spectral_radius(&a).unwrap() - expect).abs() < 1e-13);
    }

    #[test]
    fn decay_index_of_scaled_identity() {
        let a = DMatrix::identity(3, 3) * 0.5;
        let d = spectral_decay_index(&a, 0.5).unwrap();
        assert_eq!(d.tau, 2);
        assert!((d.gamma - 1.0).abs() < 1e-14);
    }

    #[test]
    fn decay_index_of_nilpotent_shift() {
        let mut a = DMatrix::zeros(5, 5);
        for i in 0..4 {
            a[(i, i + 1)] = 1.0;
        }
        assert_eq!(spectral_radius(&a).unwrap(), 0.0);
        let d = spectral_decay_index(&a, 0.5).unwrap();
        assert_eq!(d.tau, 5);
        assert!((d.gamma - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decay_index_errors() {
        let a = DMatrix::identity(2, 2) * 1.1;
        assert!(matches!(spectral_decay_index(&a, 0.5), Err(Error::Unstable { .. })));
        let slow = DMatrix::identity(1, 1) * 0.999;
        match spectral_decay_index_with(&slow, 0.5, DecayNorm::Infinity, 5) {
            Err(Error::CapExceeded { cap, trace }) => {
                assert_eq!(cap, 5);
                assert_eq!(trace.len(), 5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn spectral_norm_variant_can_differ() {
        // ||A||_inf = 0.9 + 0.3 but ||A||_2 is smaller.
        let a = DMatrix::from_row_slice(2, 2, &[0.45, 0.3, 0.0, 0.45]);
        let inf = spectral_decay_index_with(&a, 0.5, DecayNorm::Infinity, 100).unwrap();
        let two = spectral_decay_index_with(&a, 0.5, DecayNorm::Spectral, 100).unwrap();
        assert!(inf.tau >= two.tau);
    }

    #[test]
    fn companion_cases() {
        let a = DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(companion_form(&[a.clone()]).unwrap(), a);

        let z = DMatrix::zeros(3, 3);
        let c = companion_form(&[z.clone(), z]).unwrap();
        assert_eq!(c.nrows(), 6);
        assert_eq!(c.view((3, 0), (3, 3)).into_owned(), DMatrix::identity(3, 3));
        // defective zero eigenvalue: only sqrt(eps)-accurate
        assert!(spectral_radius(&c).unwrap() < 1e-6);

        assert!(matches!(
            companion_form(&[DMatrix::zeros(2, 2), DMatrix::zeros(3, 3)]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn companion_eigenvalues_match_quadratic_roots() {
        // roots of z^2 - a z - b
        for &(a, b) in &[(0.5, 0.2), (1.2, -0.5), (0.3, 0.9), (1.0, 0.1)] {
            let c = companion_form(&[
                DMatrix::from_element(1, 1, a),
                DMatrix::from_element(1, 1, b),
            ])
            .unwrap();
            assert_eq!(c, DMatrix::from_row_slice(2, 2, &[a, b, 1.0, 0.0]));
            let disc: f64 = a * a + 4.0 * b;
            let oracle = if disc >= 0.0 {
                ((a + disc.sqrt()) / 2.0).abs().max(((a - disc.sqrt()) / 2.0).abs())
            } else {
                (-b).sqrt()
            };
            let rho = spectral_radius(&c).unwrap();
            assert!((rho - oracle).abs() < 1e-12, "{a} {b}: {rho} vs {oracle}");
            // stable iff both roots inside the unit circle
            let stable = oracle < 1.0;
            assert_eq!(TransitionMatrix::new(c).is_ok(), stable);
        }
    }

    #[test]
    fn simulate_with_zero_matrix_gives_raw_draws() {
        let a = TransitionMatrix::new(DMatrix::zeros(2, 2)).unwrap();
        let s = simulate(&a, &InnovationSpec::gaussian(1.0), 5, Some(0), 11).unwrap();
        let mut rng = substream(11, Domain::Innovations, 0);
        for i in 0..=5 {
            for k in 0..2 {
                let z: f64 = StandardNormal.sample(&mut rng);
                assert_eq!(s.series[(i, k)], z);
            }
        }
    }

    #[test]
    fn zero_innovations_give_zero_path() {
        let a = TransitionMatrix::new(DMatrix::identity(3, 3) * 0.4).unwrap();
        let s = simulate(&a, &InnovationSpec::gaussian(0.0), 20, None, 3).unwrap();
        assert!(s.series.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn simulate_is_reproducible() {
        let a = TransitionMatrix::new(DMatrix::identity(3, 3) * 0.4).unwrap();
        let innov = InnovationSpec::student_t(5.0);
        let s1 = simulate(&a, &innov, 50, None, 9).unwrap();
        let s2 = simulate(&a, &innov, 50, None, 9).unwrap();
        let s3 = simulate(&a, &innov, 50, None, 10).unwrap();
        assert_eq!(s1, s2);
        assert_ne!(s1.series, s3.series);
        assert_eq!(s1.series.nrows(), 51);
    }

    #[test]
    fn ar1_variance_matches_formula() {
        let a = TransitionMatrix::new(DMatrix::from_element(1, 1, 0.5)).unwrap();
        let s = simulate(&a, &InnovationSpec::gaussian(1.0), 100_000, None, 5).unwrap();
        let col = s.series.column(0);
        let mean = col.mean();
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / col.len() as f64;
        let target = 1.0 / (1.0 - 0.25);
        assert!((var - target).abs() < 0.1 * target, "{var}");
    }

    #[test]
    fn laplace_and_standardized_t_have_expected_variance() {
        let a = TransitionMatrix::new(DMatrix::zeros(1, 1)).unwrap();
        let mut t = InnovationSpec::student_t(5.0);
        t.standardize = true;
        for spec in [InnovationSpec::laplace(1.0), t] {
            let s = simulate(&a, &spec, 200_000, Some(0), 21).unwrap();
            let v = s.series.iter().map(|x| x * x).sum::<f64>() / s.series.len() as f64;
            let target = spec.variance(0);
            assert!((v - target).abs() < 0.05 * target, "{spec:?}: {v}");
        }
    }

    #[test]
    fn simulate_rejects_invalid_innovations() {
        let a = TransitionMatrix::new(DMatrix::zeros(2, 2)).unwrap();
        assert!(simulate(&a, &InnovationSpec::student_t(2.0), 5, None, 0).is_err());
        let mut bad = InnovationSpec::gaussian(1.0);
        bad.scale = Scale::PerCoordinate(vec![1.0]);
        assert!(simulate(&a, &bad, 5, None, 0).is_err());
    }

    #[test]
    fn burn_in_floor_and_growth() {
        let a = TransitionMatrix::new(DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(default_burn_in(&a, 100), 200);
        let slow = TransitionMatrix::new(DMatrix::identity(1, 1) * 0.97).unwrap();
        let b = default_burn_in(&slow, 1000);
        assert!(b > 200);
        assert!(b <= 10 * slow.decay_index * 7);
    }

    fn kronecker_lyapunov(a: &DMatrix<f64>, sigma: &DMatrix<f64>) -> DMatrix<f64> {
        let p = a.nrows();
        let lhs = DMatrix::identity(p * p, p * p) - kron(a, a);
        let rhs = nalgebra::DVector::from_column_slice(sigma.as_slice());
        let sol = lhs.lu().solve(&rhs).unwrap();
        DMatrix::from_column_slice(p, p, sol.as_slice())
    }

    #[test]
    fn lyapunov_cases() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        assert_eq!(stationary_autocov(&DMatrix::zeros(2, 2), &sigma).unwrap(), sigma);

        let a = DMatrix::identity(3, 3) * 0.6;
        let g = stationary_autocov(&a, &DMatrix::identity(3, 3)).unwrap();
        assert!(max_abs(&(g - DMatrix::identity(3, 3) / (1.0 - 0.36))) < 1e-12);

        let a = DMatrix::from_row_slice(3, 3, &[0.5, 0.4, 0.0, -0.2, 0.3, 0.6, 0.1, 0.0, 0.7]);
        let g = stationary_autocov(&a, &sigma.clone().resize(3, 3, 0.5)).unwrap();
        let oracle = kronecker_lyapunov(&a, &sigma.resize(3, 3, 0.5));
        assert!(max_abs(&(g - oracle)) < 1e-10);
    }
}
