use thiserror::Error;

/// Errors raised by the solvers and the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {name} must satisfy {constraint} (got {value})")]
    InvalidParam {
        name: &'static str,
        constraint: &'static str,
        value: f64,
    },

    #[error("degenerate model: {0}")]
    Degenerate(String),

    #[error("root not bracketed: {0}")]
    NoBracket(String),

    #[error("closed forms disagree: {what} (relative gap {gap:e})")]
    Inconsistent { what: &'static str, gap: f64 },

    #[error("price map is not a contraction: K = {0} >= 1")]
    NotContraction(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("simulated state left the positive half-line at step {step}")]
    NonPositiveState { step: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
