use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, bad config, or inputs that cannot be read.
    #[error("{0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Input(ldrld_train::Error),

    #[error(transparent)]
    Run(#[from] ldrld_train::Error),

    #[error("{} check(s) failed: {}", .0.len(), .0.join(", "))]
    ChecksFailed(Vec<String>),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 1 for failed checks and training failures, 2 for usage and input errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } | CliError::Input(_) => 2,
            CliError::Run(_) | CliError::ChecksFailed(_) => 1,
        }
    }
}

impl From<ldrld_core::Error> for CliError {
    fn from(e: ldrld_core::Error) -> Self {
        CliError::Run(e.into())
    }
}
