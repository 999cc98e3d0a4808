use thiserror::Error;

/// Errors produced by the simulator library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    /// Physical parameters violate their invariants.
    #[error("invalid parameters: {0}")]
    Params(String),

    /// The preparation loop for a pair never succeeded.
    #[error("pair ({0}, {1}) not prepared after {2} attempts")]
    PrepExhausted(usize, usize, u64),

    #[error("zero vector cannot be normalized")]
    ZeroNorm,

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
