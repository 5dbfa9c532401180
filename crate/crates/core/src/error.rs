use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("event {index}: {message}")]
    OutOfBounds { index: usize, message: String },

    #[error("timestamps not monotone at event {index} ({prev} > {next}); pass --sort to reorder")]
    NotSorted { index: usize, prev: f64, next: f64 },

    #[error("invalid format: {0}")]
    Format(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Plugin(#[from] crate::plugin::PluginError),

    #[error("reconstructor: {0}")]
    Reconstructor(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
