use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = RunError> = std::result::Result<T, E>;

/// Stable process exit codes.
pub mod exit_code {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 1;
    pub const IO: i32 = 2;
    pub const MISSING_ARTIFACT: i32 = 3;
    pub const NON_FINITE_LOSS: i32 = 4;
    pub const NUMERIC: i32 = 5;
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing artifact: {0}")]
    MissingArtifact(PathBuf),
    #[error("malformed {what} at line {line}: {message}")]
    Parse { what: &'static str, line: usize, message: String },
    #[error("non-finite loss; last good checkpoint: {}", .last_good.as_ref().map_or("none".into(), |p| p.display().to_string()))]
    NonFiniteLoss { last_good: Option<PathBuf> },
    #[error(transparent)]
    Core(#[from] byel_core::Error),
}

impl RunError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        RunError::Io { context: context.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Core(byel_core::Error::Config(_)) => exit_code::CONFIG,
            RunError::Io { .. } | RunError::Parse { .. } => exit_code::IO,
            RunError::MissingArtifact(_) => exit_code::MISSING_ARTIFACT,
            RunError::NonFiniteLoss { .. } | RunError::Core(byel_core::Error::NonFinite(_)) => {
                exit_code::NON_FINITE_LOSS
            }
            RunError::Core(_) => exit_code::NUMERIC,
        }
    }
}

pub(crate) trait IoContext<T> {
    fn ctx(self, context: impl FnOnce() -> String) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn ctx(self, context: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|e| RunError::io(context(), e))
    }
}
