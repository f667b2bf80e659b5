//! Application errors mapped to process exit codes.

use thiserror::Error;

/// Errors surfaced by the command-line pipeline.
///
/// `Input` covers everything attributable to user-provided data or
/// arguments (exit code 2); `Internal` covers broken invariants inside the
/// pipeline itself (exit code 3).
#[derive(Debug, Error)]
pub enum AppError {
    #[error("input error: {0}")]
    Input(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl AppError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Input(_) => 2,
            AppError::Internal(_) => 3,
        }
    }

    pub fn input(msg: impl Into<String>) -> Self {
        AppError::Input(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        AppError::Internal(msg.into())
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Input(format!("io: {e}"))
    }
}

/// Core errors reaching the CLI are triggered by user data.
impl From<midbox_core::Error> for AppError {
    fn from(e: midbox_core::Error) -> Self {
        AppError::Input(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, AppError>;
