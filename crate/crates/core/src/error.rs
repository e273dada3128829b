use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("record {record} references unknown table {table_id}")]
    UnknownTable { record: String, table_id: String },

    #[error("column index {index} out of range for table {table_id} ({columns} columns)")]
    ColumnOutOfRange {
        table_id: String,
        index: usize,
        columns: usize,
    },

    #[error("invalid table schema {table_id}: {message}")]
    InvalidSchema { table_id: String, message: String },

    #[error("empty vocabulary: no training word occurs more than {alpha} times")]
    EmptyVocabulary { alpha: usize },

    #[error("k-means needs at least {k} points, got {points}")]
    TooFewPoints { k: usize, points: usize },

    #[error("cannot encode an empty token sequence")]
    EmptySequence,

    #[error("embedding dimension mismatch at line {line}: expected {expected}, found {found}")]
    EmbeddingDimension {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("non-finite training loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("no training pairs available")]
    NoTrainingData,

    #[error("index mismatch: {0}")]
    IndexMismatch(String),

    #[error("empty evaluation set")]
    EmptyEvaluationSet,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid artifact {path}: {message}")]
    Artifact { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn artifact(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Artifact {
            path: path.into(),
            message: message.into(),
        }
    }
}
