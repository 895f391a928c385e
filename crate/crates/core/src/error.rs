use thiserror::Error;

/// Error type shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Inputs outside the operation's domain (bad index, bad parameter, empty set).
    #[error("domain error: {0}")]
    Domain(String),
    /// A constructed object failed its own invariant check.
    #[error("construction error: {0}")]
    Construction(String),
    /// Solver failure or non-convergence.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// A field or audit is missing values it needs.
    #[error("partial coverage: {0}")]
    Coverage(String),
    /// The requested computation is not available for this kind of space.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// Malformed serialized input.
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
