use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoxError {
    /// An argument lies outside the domain of the operation (time outside
    /// the horizon, mismatched horizons, divergent transform, ...).
    #[error("domain error: {0}")]
    Domain(String),
    /// A malformed model or experiment specification.
    #[error("config error: {0}")]
    Config(String),
    /// Two algebraically equal routes disagreed; indicates a bug.
    #[error("internal consistency error: {0}")]
    Consistency(String),
    /// All importance weights vanished.
    #[error("degenerate estimate: {0}")]
    Degenerate(String),
    /// An oracle could not reach the requested accuracy.
    #[error("refinement error: {message} (error bound {bound:e} > tolerance {tolerance:e})")]
    Refinement {
        message: String,
        bound: f64,
        tolerance: f64,
    },
}

pub type Result<T, E = CoxError> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> CoxError {
    CoxError::Domain(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> CoxError {
    CoxError::Config(msg.into())
}
