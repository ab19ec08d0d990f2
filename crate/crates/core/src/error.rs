use thiserror::Error;

#[derive(Debug, Error)]
pub enum E2mError {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("validation failed for {what} at index {index}: {reason}")]
    Validation {
        what: &'static str,
        index: usize,
        reason: String,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("weights are not on the simplex: {0}")]
    Simplex(String),

    #[error("not PSD: smallest eigenvalue {0:e}")]
    NotPsd(f64),

    #[error("derivative singular: {0}")]
    DerivativeSingular(String),

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("non-Hadamard space: bound not guaranteed")]
    NonHadamard,

    #[error("degenerate weight mass {0:e}")]
    DegenerateWeights(f64),

    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("unknown space tag `{0}`")]
    UnknownSpace(String),

    #[error("unsupported checkpoint version {0}")]
    Version(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = E2mError> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> E2mError {
    E2mError::Invalid(msg.into())
}

pub(crate) fn dim(msg: impl Into<String>) -> E2mError {
    E2mError::Dimension(msg.into())
}
