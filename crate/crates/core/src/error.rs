use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the linking pipeline.
///
/// The `Display` output starts with a category prefix (`parse error:`,
/// `io error:` and so on) so the CLI can forward it to stderr verbatim.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("integrity error: edge on line {line} references unknown entity `{id}`")]
    UnknownEndpoint { line: usize, id: String },

    #[error("integrity error: duplicate entity id `{0}`")]
    DuplicateEntity(String),

    #[error("lookup error: unknown entity `{0}`")]
    UnknownEntity(String),

    #[error("embedding error: no vector for entity `{0}`")]
    MissingEmbedding(String),

    #[error("embedding error: dimension mismatch ({left} vs {right})")]
    DimensionMismatch { left: usize, right: usize },

    #[error("solver error: {0}")]
    Solver(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("eval error: {0}")]
    Eval(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(source_name: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            message: message.into(),
        }
    }
}
