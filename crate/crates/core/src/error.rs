use thiserror::Error;

use crate::hybrid::Sample;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("determinant size limit exceeded: {rows} rows (max {max})")]
    SizeLimit { rows: usize, max: usize },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("time outside signal domain: {0}")]
    Domain(String),

    #[error("not observable at target: {0}")]
    NotObservableAtTarget(String),

    #[error("observer gain numerically singular (condition estimate {condition:e})")]
    GainSingular { condition: f64 },

    #[error("theta too small: {0}")]
    ThetaTooSmall(String),

    #[error("simulation diverged at t = {t}")]
    Divergence { t: f64, last_valid: Box<Sample> },

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
