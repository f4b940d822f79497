use thiserror::Error;

/// Errors produced by construction, validation, and iteration.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("row {index} is (numerically) the zero vector")]
    ZeroRow { index: usize },

    #[error("update for agent {index} underflowed (degenerate mixing)")]
    DegenerateUpdate { index: usize },

    #[error("did not converge within {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("trace unsuitable for rate fitting: {0}")]
    FitRefused(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
