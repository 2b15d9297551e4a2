use thiserror::Error;

#[derive(Debug, Error)]
pub enum MgtError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("numerical failure at step {step} (mode {mode}): non-finite state")]
    NumericalFailure { step: usize, mode: usize },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("kernel data: {0}")]
    KernelData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MgtError>;

impl MgtError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        MgtError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        MgtError::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
