use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("cannot connect to {addr}: {source}")]
    Connection {
        addr: String,
        #[source]
        source: io::Error,
    },

    #[error("format error in {origin}{}: {message}", line.map(|l| format!(" line {l}")).unwrap_or_default())]
    Format {
        origin: String,
        line: Option<usize>,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("similarity is undefined for a zero vector")]
    UndefinedSimilarity,

    #[error("correlation is undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(
        origin: impl Into<String>,
        line: Option<usize>,
        message: impl Into<String>,
    ) -> Self {
        Error::Format {
            origin: origin.into(),
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by the input data rather than the program.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Connection { .. }
                | Error::Format { .. }
                | Error::UndefinedSimilarity
                | Error::UndefinedCorrelation(_)
                | Error::InsufficientData(_)
                | Error::Training(_)
        )
    }
}
