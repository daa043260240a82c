use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unknown axis label `{0}`")]
    UnknownLabel(String),

    #[error("cannot merge non-adjacent axes {0} and {1}")]
    NonAdjacentMerge(usize, usize),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("singular matrix encountered: {0}")]
    Singular(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solver failed at time step {step}: {reason}")]
    StepFailure { step: usize, reason: String },

    #[error("configuration hash mismatch: expected {expected}, found {found}")]
    ConfigHashMismatch { expected: String, found: String },

    #[error("size cap exceeded: {0}")]
    SizeCapExceeded(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
