use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("unsupported mode: {0}")]
    Unsupported(String),

    #[error("Lanczos chain broke down: requested {requested} sites, achieved {achieved}")]
    ChainBreakdown { requested: usize, achieved: usize },

    #[error("capacity exceeded: {what} needs {required}, limit is {limit}")]
    Capacity {
        what: &'static str,
        required: u128,
        limit: u128,
    },

    #[error("non-finite amplitude after step {step}")]
    NonFinite { step: usize },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("internal fault: {0}")]
    Internal(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Parameter {
        name,
        reason: reason.into(),
    }
}
