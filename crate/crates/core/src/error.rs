use thiserror::Error;

/// Errors raised by oracles, models and solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite objective value {value} (first non-finite coordinate: {coordinate:?})")]
    NonFiniteValue { value: f64, coordinate: Option<usize> },

    #[error("invalid regularizer: {0}")]
    InvalidRegularizer(String),

    #[error("invalid oracle: {0}")]
    InvalidOracle(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("curvature model is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("damped factorization failed: damping {damping:e} exceeded cap {cap:e}")]
    DampingCapExceeded { damping: f64, cap: f64 },

    #[error("step is not a descent direction (lambda = {lambda:e})")]
    NonDescent { lambda: f64 },

    #[error("line search failed after {trials} trials")]
    LineSearchFailure { trials: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
