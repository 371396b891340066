use thiserror::Error;

/// Errors raised by the homogenization engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("integrand is not admissible for homogenization: {0}")]
    NotAdmissible(String),
    #[error("non-finite energy encountered ({0})")]
    NonFinite(String),
    #[error("query outside tabulated box: {0}; enlarge the source z-grid")]
    OutOfBox(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}
