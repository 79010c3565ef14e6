//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A request would exceed a hard resource guard (memory, enumeration size).
    #[error("resource error: {0}")]
    Resource(String),

    /// An internal numerical consistency check failed.
    #[error("internal consistency error: {0}")]
    Internal(String),

    /// A file did not match the expected binary layout or manifest.
    #[error("format error: {0}")]
    Format(String),

    /// A model produced non-finite activations or mismatched geometry.
    #[error("model error: {0}")]
    Model(String),

    /// Training diverged or was fed inconsistent data.
    #[error("training error: {0}")]
    Training(String),

    /// Command-line usage error (maps to exit code 2).
    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
