use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A validation failure tied to a named input field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn join_fields(errors: &[FieldError]) -> String {
    errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum MatsError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {}", join_fields(.0))]
    InvalidConfig(Vec<FieldError>),

    #[error("invalid trial data: {}", join_fields(.0))]
    InvalidData(Vec<FieldError>),

    #[error("dimension mismatch: {what} has length {found}, expected {expected}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("posterior draws are empty")]
    EmptyDraws,

    #[error("invalid calibration request: {0}")]
    Calibration(String),

    #[error("{0}")]
    Stage(String),

    #[error("n_replicates must be ≥ 1")]
    NoReplicates,

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl MatsError {
    /// Field-level messages for validation failures, empty for other kinds.
    pub fn field_errors(&self) -> &[FieldError] {
        match self {
            MatsError::InvalidConfig(v) | MatsError::InvalidData(v) => v,
            _ => &[],
        }
    }

    /// True for errors caused by bad caller input rather than the environment.
    pub fn is_invalid_input(&self) -> bool {
        !matches!(self, MatsError::Io(_))
    }
}

pub type Result<T, E = MatsError> = std::result::Result<T, E>;
