use thiserror::Error;

/// Errors raised anywhere in the inference toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A forward simulation produced a non-finite or otherwise unusable state.
    #[error("simulation failed at step {step}: {message}")]
    SimulationFailure { step: usize, message: String },

    #[error("covariance matrix is singular even after regularization")]
    SingularCovariance,

    #[error("simulation budget too small: {0}")]
    Budget(String),

    #[error("{failed} of {total} simulations failed")]
    TooManyFailures { failed: usize, total: usize },

    #[error("all particles have zero weight at observation {step}")]
    DegenerateFilter { step: usize },

    #[error("chain initialization failed: {0}")]
    Initialization(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
