use thiserror::Error;

/// Errors raised by the simulation core.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum SimError {
    /// A physical or configuration parameter is outside its valid range.
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },
    /// A non-finite value reached a numeric routine.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    /// Operator input that cannot be used (e.g. timestamps out of order).
    #[error("invalid input: {0}")]
    Input(String),
    /// Formation configuration is incomplete or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),
    /// The tactile scheduler clock moved backwards.
    #[error("clock regression: {now_ms} ms is before {last_ms} ms")]
    ClockRegression { now_ms: f64, last_ms: f64 },
}

impl SimError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        SimError::Parameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
