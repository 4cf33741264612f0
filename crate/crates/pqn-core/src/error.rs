use thiserror::Error;

use crate::tsp::TourViolation;

pub type Result<T, E = PqnError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PqnError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid tour: {0}")]
    InvalidTour(TourViolation),

    #[error("action {action} is not feasible from the current state")]
    InfeasibleAction { action: usize },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("instance too large for exact solver: n = {n}, limit {limit}")]
    Capacity { n: usize, limit: usize },

    #[error("parse error in field `{field}`: {message}")]
    Parse { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl PqnError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        PqnError::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(field: impl Into<String>, message: impl Into<String>) -> Self {
        PqnError::Parse {
            field: field.into(),
            message: message.into(),
        }
    }
}
