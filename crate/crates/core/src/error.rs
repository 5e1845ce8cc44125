use thiserror::Error;

/// Errors raised by simulation, quadrature and measure evaluation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("runaway process: more than {cap} accepted events (reached t = {time})")]
    Runaway { cap: usize, time: f64 },

    #[error("unstable Hawkes kernel: branching ratio {0} must be < 1")]
    UnstableKernel(f64),

    #[error("undefined split: parent cell {cell} has zero mass at t = {time}")]
    UndefinedSplit { cell: usize, time: f64 },

    #[error("integrability: {0}")]
    Integrability(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
