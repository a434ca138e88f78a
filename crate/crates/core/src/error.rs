//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EltoError {
    /// A caller-supplied argument violated a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Internal consistency check failed (indexing, shapes built by us).
    #[error("internal consistency error: {0}")]
    Internal(String),

    /// A linear algebra routine failed to converge or was handed a
    /// singular system that should not have been singular.
    #[error("linear algebra failure: {0}")]
    Linalg(String),

    /// Non-finite values encountered where finite values are required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A filter update was called with a belief in the wrong stage.
    #[error("filter state machine: {0}")]
    StageMismatch(String),

    /// I/O or parse failure, with context.
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for EltoError {
    fn from(e: std::io::Error) -> Self {
        EltoError::Io(e.to_string())
    }
}

impl From<ndarray_linalg::error::LinalgError> for EltoError {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        EltoError::Linalg(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, EltoError>;
