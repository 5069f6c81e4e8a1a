use std::path::PathBuf;

use thiserror::Error;

/// Process exit code for configuration and validation failures.
pub const EXIT_CONFIG: i32 = 2;
/// Process exit code for runtime failures, including training divergence.
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] transmatch_core::Error),
}

impl AppError {
    pub fn config(msg: impl Into<String>) -> Self {
        AppError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use transmatch_core::Error as E;
        match self {
            AppError::Config(_) => EXIT_CONFIG,
            AppError::Core(E::Config(_) | E::Sampling { .. } | E::Statistics(_)) => EXIT_CONFIG,
            AppError::Runtime(_) | AppError::Io { .. } | AppError::Core(_) => EXIT_RUNTIME,
        }
    }
}

pub type Result<T> = std::result::Result<T, AppError>;
