use thiserror::Error;

/// Errors raised by the simulation engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Caller violated an operation contract (lengths, ordering, state).
    #[error("contract violation: {0}")]
    Contract(String),
    /// The operation is not defined for this input shape.
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    /// Matched-filter reference has no energy.
    #[error("mutual SNR undefined: {0}")]
    UndefinedSnr(String),
    /// A constructive search exhausted its budget.
    #[error("search failed: {0}")]
    SearchFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
