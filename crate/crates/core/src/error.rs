use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A time or index fell outside the domain of a path.
    #[error("domain error: {0}")]
    Domain(String),
    /// An argument violated an operation's precondition.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// A tensor with vanishing scalar part was inverted.
    #[error("singular element: {0}")]
    Singularity(String),
    /// A time-stepping scheme produced a non-finite state.
    #[error("numerical divergence at step {step}: {what}")]
    Divergence { step: usize, what: String },
    /// Model coefficients are inadmissible (e.g. I - rho rho^T not PSD).
    #[error("model error: {0}")]
    Model(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
