use std::path::PathBuf;

use thiserror::Error;

/// Process exit status for a failed command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    UserError = 1,
    InternalError = 2,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] survcobra::Error),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        use survcobra::Error as E;
        match self {
            CliError::Config(_) | CliError::Write { .. } => ExitCode::UserError,
            CliError::Core(
                E::Io { .. }
                | E::Csv(_)
                | E::MissingColumn(_)
                | E::BadRow { .. }
                | E::AllMissing(_)
                | E::InvalidDataset(_)
                | E::InvalidParameter(_)
                | E::DimensionMismatch { .. },
            ) => ExitCode::UserError,
            CliError::Core(_) | CliError::Internal(_) => ExitCode::InternalError,
        }
    }
}
