use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("run {run} diverged at {message}")]
    Diverged { run: String, message: String },

    #[error(transparent)]
    Core(#[from] fddt_core::Error),
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn format(path: &Path, message: impl Into<String>) -> Self {
        Self::Format {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    /// Short category name used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config { .. } => "config",
            Self::Format { .. } => "format",
            Self::Io { .. } => "io",
            Self::Invalid(_) => "invalid",
            Self::Diverged { .. } => "diverged",
            Self::Core(fddt_core::Error::Numerical(_) | fddt_core::Error::NonFinite { .. }) => "numerical",
            Self::Core(_) => "invalid",
        }
    }

    /// Process exit status: 1 for rejected input, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "io" | "diverged" | "numerical" => 2,
            _ => 1,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::Invalid(msg.into())
}
