//! Crate-wide error type.

/// Errors surfaced by solver operations.
///
/// The CLI maps `Invariant` to exit code 3 (with a diagnostic dump) and every
/// other variant to exit code 2.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on arguments or data was violated.
    #[error("domain error: {0}")]
    Domain(String),

    /// An instance or argument exceeds a documented size cap.
    #[error("size cap exceeded: {0}")]
    CapExceeded(String),

    /// The requested operation does not support this weight combination.
    #[error("unsupported variant: {0}")]
    UnsupportedVariant(String),

    /// An instance file or structure failed validation.
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    /// An internal guarantee failed; carries a diagnostic payload.
    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn cap(msg: impl Into<String>) -> Self {
        Error::CapExceeded(msg.into())
    }

    pub fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInstance(msg.into())
    }
}
