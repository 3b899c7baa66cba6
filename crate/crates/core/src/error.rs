use thiserror::Error;

/// Errors raised by the estimation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapeError {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix is not positive definite (eigenvalue {eigenvalue:e} at or below tolerance {tolerance:e})")]
    NotPositiveDefinite { eigenvalue: f64, tolerance: f64 },

    /// Shapes or lengths do not fit together.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("iteration did not converge after {iterations} steps (last residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    /// An observation coincides with the location center.
    #[error("observation {index} has zero standardized distance")]
    DegenerateObservation { index: usize },

    #[error("degenerate scatter: {0}")]
    Degenerate(String),

    /// The one-step path left the positive-definite cone.
    #[error("path point at beta = {beta} is not positive definite")]
    PathExit { beta: f64 },

    #[error("no sign change of the search function up to beta = {cap}")]
    NoCrossing { cap: f64 },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for ShapeError {
    fn from(e: std::io::Error) -> Self {
        ShapeError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, ShapeError>;
