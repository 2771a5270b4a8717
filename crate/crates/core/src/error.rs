use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("record {image_id}: {path}: {message}")]
    Record {
        image_id: String,
        path: String,
        message: String,
    },

    #[error("line {line}: {source}")]
    Line {
        line: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("duplicate image id `{0}`")]
    DuplicateImage(String),

    #[error("selection: {0}")]
    Selection(String),

    #[error("evaluation: {0}")]
    Evaluation(String),

    #[error("simulation: {0}")]
    Simulation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn record(image_id: &str, path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Record {
            image_id: if image_id.is_empty() {
                "<unknown>".to_string()
            } else {
                image_id.to_string()
            },
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
