use thiserror::Error;

/// Errors produced by the analyzers, the simulator and the experiment runner.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("age {age} is past the support of the distribution (tail is zero)")]
    PastSupport { age: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("inconclusive classification: {reason} (margin {margin:e})")]
    Inconclusive { reason: String, margin: f64 },

    #[error("mean residual life is unbounded; no approximate Gittins policy can cap the worst age")]
    UnboundedResidual,

    #[error("no age satisfies the approximation requirement for eps = {eps}")]
    NoValidAge { eps: f64 },

    #[error("root bracket failed: {0}")]
    BracketFailure(String),

    #[error("expected a {expected} distribution, got {actual}")]
    ClassMismatch { expected: String, actual: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("unstable configuration: load {rho} must be below 1")]
    Unstable { rho: f64 },

    #[error("simulation aborted: {0}")]
    Overflow(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
