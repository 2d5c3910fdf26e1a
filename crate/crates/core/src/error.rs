use thiserror::Error;

/// Errors raised by the optimizers, mechanisms and schedule builders.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid noise scale {0} (must be positive and finite)")]
    InvalidScale(f64),

    #[error("insufficient users: requested {requested}, dataset holds {available}")]
    InsufficientUsers { requested: usize, available: usize },

    #[error("infeasible schedule at phase {phase}: {reason}")]
    InfeasibleSchedule { phase: usize, reason: String },

    #[error("smoothing radius {radius} exceeds the loss domain margin {margin}")]
    DomainMargin { radius: f64, margin: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
