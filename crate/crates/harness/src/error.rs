use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("{method} k={k}: {source}")]
    Row {
        method: String,
        k: usize,
        #[source]
        source: subspace_core::Error,
    },
    #[error(transparent)]
    Core(#[from] subspace_core::Error),
    #[error("report error: {0}")]
    Report(String),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category, used in CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Io { .. } => "io",
            Self::Format { .. } => "format",
            Self::Config(_) => "config",
            Self::Row { .. } => "experiment",
            Self::Core(_) => "numeric",
            Self::Report(_) => "report",
        }
    }
}
