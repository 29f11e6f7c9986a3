use std::path::Path;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad invocation: missing or conflicting arguments. Exit status 1.
    #[error("{0}")]
    Usage(String),

    /// Anything wrong with the files or values handed to us. Exit status 2.
    #[error("{0}")]
    Data(String),

    #[error(transparent)]
    Core(#[from] diffsteg::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) | CliError::Core(_) => 2,
        }
    }

    pub(crate) fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

pub(crate) fn data(msg: impl Into<String>) -> CliError {
    CliError::Data(msg.into())
}

pub(crate) fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}
