//! Error type shared by every module in the crate.

use thiserror::Error;

/// Crate-wide error. Variants are grouped by how callers should react:
/// everything except `Io`, `Numeric`, and `Divergence` indicates a bad
/// argument or malformed input that the caller can fix.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violates a documented precondition (range, shape, count).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A value is outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A structure is internally inconsistent (mismatched lengths, bad keys).
    #[error("validation error: {0}")]
    Validation(String),

    /// A serialized payload does not match its declared format.
    #[error("format error: {0}")]
    Format(String),

    /// An index is out of bounds for the structure it addresses.
    #[error("index error: {0}")]
    Index(String),

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// JSON encode/decode failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// A computation produced a non-finite or otherwise unusable value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Training left the stable regime; `iteration` is the failing step.
    #[error("diverged at iteration {iteration}: {message}")]
    Divergence { iteration: u64, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
