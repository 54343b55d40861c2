use std::path::{Path, PathBuf};

/// Failures of the file and CLI layer. Each variant maps to a stable
/// category string and exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Mismatch(String),
    #[error("{0}")]
    Train(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(path: &Path, line: usize, message: impl ToString) -> Self {
        Error::Parse {
            path: path.to_path_buf(),
            line,
            message: message.to_string(),
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Config(_) => "config",
            Error::Data(_) => "data",
            Error::Mismatch(_) => "mismatch",
            Error::Train(_) => "train",
        }
    }

    /// Process exit code; 2 is left to argument parsing.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 3,
            Error::Io { .. } => 4,
            Error::Parse { .. } | Error::Data(_) => 5,
            Error::Mismatch(_) => 6,
            Error::Train(_) => 7,
        }
    }
}

impl From<spo_core::trainer::TrainError> for Error {
    fn from(e: spo_core::trainer::TrainError) -> Self {
        use spo_core::trainer::TrainError as T;
        match e {
            T::Config(_) | T::Scheduler(_) => Error::Config(e.to_string()),
            T::Mismatch(_) => Error::Mismatch(e.to_string()),
            T::EmptySplit(_) => Error::Data(e.to_string()),
            _ => Error::Train(e.to_string()),
        }
    }
}
