use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Stepping produced a non-finite value.
    #[error("numerical failure at step {step}: {detail}")]
    Numerical { step: usize, detail: String },

    /// Two objects that must share a grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A statistical operation was asked to run on too few samples or a
    /// degenerate input.
    #[error("insufficient data: {0}")]
    Insufficient(String),

    /// The event cannot be evaluated block-by-block.
    #[error("event not decomposable into time blocks: {0}")]
    NotDecomposable(String),

    /// An experiment precondition (initial-profile bound etc.) is violated.
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
