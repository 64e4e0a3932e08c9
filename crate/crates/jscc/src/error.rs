use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Failure of a runner stage. [`RunError::exit_code`] maps configuration
/// problems to 1 and everything else to 2.
#[derive(Debug, Error)]
pub enum RunError {
    #[error("config: {field}: {message}")]
    Config { field: &'static str, message: String },
    #[error("config file {path}: {message}")]
    ConfigFile { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error("checkpoint {path} does not match the configuration: {message}")]
    Mismatch { path: PathBuf, message: String },
    #[error("csv {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("plot {path}: {message}")]
    Plot { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] jscc_core::Error),
}

pub type RunResult<T> = Result<T, RunError>;

impl RunError {
    pub fn config(field: &'static str, message: impl Into<String>) -> Self {
        RunError::Config { field, message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Self {
        let path = path.into();
        move |source| RunError::Io { path, source }
    }

    pub fn exit_code(&self) -> i32 {
        use jscc_core::Error as E;
        match self {
            RunError::Config { .. } | RunError::ConfigFile { .. } => 1,
            RunError::Core(E::InvalidConfig(_) | E::InvalidSplit(_) | E::TooManyPairs { .. } | E::InvalidModel(_)) => 1,
            _ => 2,
        }
    }
}
