use std::path::Path;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Usage(String),

    #[error("config {source_name}: {message}")]
    Config { source_name: String, message: String },

    /// Missing or malformed input file.
    #[error("{path}: {message}")]
    Data { path: String, message: String },

    #[error("output directory {0} is locked by another run")]
    Locked(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Numerical(#[from] slitflow::Error),
}

impl HarnessError {
    pub fn data(path: &Path, message: impl Into<String>) -> Self {
        HarnessError::Data { path: path.display().to_string(), message: message.into() }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.display().to_string(), source }
    }

    /// 2 for usage, configuration and input problems, 3 for numerical
    /// diagnostics, 1 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_)
            | HarnessError::Config { .. }
            | HarnessError::Data { .. }
            | HarnessError::Locked(_) => 2,
            HarnessError::Numerical(_) => 3,
            HarnessError::Io { .. } => 1,
        }
    }
}
