use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("transition matrix is not stable: spectral radius {radius} >= 1")]
    Unstable { radius: f64 },

    #[error("spectral decay index exceeded the iteration cap {cap}; last norms {trace:?}")]
    CapExceeded { cap: usize, trace: Vec<f64> },

    #[error("simulated state overflowed: |X[{time}][{coord}]| = {value:e}")]
    Overflow { time: usize, coord: usize, value: f64 },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("solver did not converge in {context} after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        context: String,
        iterations: usize,
        residual: f64,
    },

    #[error(
        "curvature estimate mu_hat below floor {floor} at coordinates {indices:?} (values {values:?}); \
         increase the weight threshold T or switch loss kind"
    )]
    DegenerateMu {
        floor: f64,
        indices: Vec<usize>,
        values: Vec<f64>,
    },

    #[error("PSD clipping removed eigenvalue {magnitude:e}, exceeding 1e-6 * trace ({trace:e}) of the {factor} factor")]
    ExcessiveClip {
        factor: &'static str,
        magnitude: f64,
        trace: f64,
    },

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("no bootstrap draws")]
    EmptyDraws,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
