use thiserror::Error;

/// Errors raised anywhere in the simulation pipeline.
#[derive(Debug, Error)]
pub enum QmeError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("dimension {dim} exceeds the configured cap of {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("cache error: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl QmeError {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        QmeError::InvalidParameter { name: name.into(), reason: reason.into() }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        QmeError::Config { key: key.into(), message: message.into() }
    }

    /// Process exit code used by the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            QmeError::Config { .. } | QmeError::InvalidParameter { .. } => 2,
            QmeError::DimensionCap { .. } => 3,
            QmeError::Numerical(_) => 4,
            QmeError::BasisMismatch(_) => 2,
            QmeError::Cache(_) | QmeError::Io(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, QmeError>;
