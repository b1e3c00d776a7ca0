use std::path::PathBuf;

use sctsvm_core::SctError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: {message}")]
    Json { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] SctError),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        CliError::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Stable identifier printed in front of the message.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "E_USAGE",
            CliError::Io { .. } => "E_IO",
            CliError::Parse { .. } => "E_PARSE",
            CliError::Json { .. } => "E_JSON",
            CliError::Core(e) => match e {
                SctError::Solver { .. } => "E_SOLVER",
                SctError::BandUnreachable { .. } => "E_BAND",
                SctError::InvalidArgument(_) => "E_ARGUMENT",
                SctError::NonPsdCovariance(_) => "E_CONFIG",
                _ => "E_DATA",
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
