use thiserror::Error;

/// Errors produced by the control stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("numeric fault in {context}: non-finite value")]
    NumericFault { context: &'static str },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("degenerate range: min == max == {0}")]
    DegenerateRange(f64),

    #[error("damped normal equations are not positive definite at mu = {mu:e}")]
    Factorization { mu: f64 },

    #[error("training diverged: damping exceeded {limit:e}")]
    TrainingDiverged {
        limit: f64,
        /// Epochs completed before the damping ran away.
        history: Box<crate::lm::TrainHistory>,
    },

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {reason}")]
    Io { path: String, reason: String },

    #[error("format error in {path}: {reason}")]
    Format { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(invalid(
            name,
            format!("must be finite and > 0, got {value}"),
        ))
    }
}

pub(crate) fn finite(value: f64, context: &'static str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NumericFault { context })
    }
}
