use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A matrix, vector or objective value contained NaN/inf, or a run diverged.
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("matrix is singular for the requested operation")]
    SingularMatrix,

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// The problem does not expose the oracle (exact second moment, Hessian) an operation needs.
    #[error("problem does not provide {0}")]
    MissingOracle(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("data format error: {0}")]
    DataFormat(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParam(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::PreconditionViolated(msg.into())
    }
}
