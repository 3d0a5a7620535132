use thiserror::Error;

/// Errors raised by the trainers, samplers and bound arithmetic.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("bound is undefined: {0}")]
    UndefinedBound(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("non-finite value at epoch {epoch}: {what}")]
    NonFinite { epoch: usize, what: String },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}
