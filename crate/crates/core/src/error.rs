use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested instance would not fit in the dense representation.
    #[error("capacity error: {what} = {value} exceeds the guard {limit}")]
    Capacity {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    /// Rejection sampling gave up.
    #[error("rejection cap of {cap} attempts exhausted: {detail}")]
    RejectionCap { cap: usize, detail: String },

    /// A condition that valid inputs cannot produce.
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn capacity(what: &'static str, value: usize, limit: usize) -> Self {
        Error::Capacity { what, value, limit }
    }
}
