use std::path::PathBuf;

use fpld_core::ErrorCategory;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read config {path}: {source}")]
    ReadConfig { path: PathBuf, source: std::io::Error },

    #[error("malformed config JSON: {0}")]
    Json(serde_json::Error),

    #[error("unknown command `{0}`; expected one of coeffs, phi, entropy, rate-grid, simulate, verify, zero-temp")]
    UnknownCommand(String),

    #[error("config field `{path}`: {message}")]
    Invalid { path: String, message: String },

    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },

    #[error("cannot build worker pool: {0}")]
    ThreadPool(String),

    #[error(transparent)]
    Core(#[from] fpld_core::Error),
}

impl CliError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            CliError::ReadConfig { .. }
            | CliError::Json(_)
            | CliError::UnknownCommand(_)
            | CliError::Invalid { .. } => ErrorCategory::Config,
            CliError::Write { .. } | CliError::ThreadPool(_) => ErrorCategory::ResourceCap,
            CliError::Core(e) => e.category(),
        }
    }

    /// Process exit code: 2 configuration, 3 numerical failure, 4 resource cap.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            ErrorCategory::Config => 2,
            ErrorCategory::Numeric => 3,
            ErrorCategory::ResourceCap => 4,
        }
    }
}
