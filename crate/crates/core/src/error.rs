use thiserror::Error;

use crate::models::TrainingTrace;

/// Errors raised by the toolkit. Each variant maps onto one CLI exit code.
#[derive(Debug, Error)]
pub enum LikaError {
    /// Bad arguments or violated preconditions (exit 1).
    #[error("usage error: {0}")]
    Usage(String),

    /// Malformed or missing input data, unwritable outputs (exit 2).
    #[error("data error: {0}")]
    Data(String),

    /// NaN/Inf encountered while computing (exit 3). Carries whatever part of
    /// the training trace was completed before the failure.
    #[error("numeric failure: {message}")]
    Numeric {
        message: String,
        partial_trace: Option<Box<TrainingTrace>>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl LikaError {
    pub fn numeric(message: impl Into<String>) -> Self {
        LikaError::Numeric {
            message: message.into(),
            partial_trace: None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            LikaError::Usage(_) => 1,
            LikaError::Data(_) | LikaError::Io(_) => 2,
            LikaError::Numeric { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, LikaError>;
