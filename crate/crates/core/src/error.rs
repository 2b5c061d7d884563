use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },
    #[error("non-finite value at row {row}, column {column}")]
    NonFiniteValue { row: usize, column: usize },
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("split would leave an empty side (train {train}, test {test})")]
    DegenerateSplit { train: usize, test: usize },
    #[error("training data contains a single class")]
    SingleClassTraining,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("oracle failure: {0}")]
    OracleFailure(String),
    #[error("could not spawn oracle: {0}")]
    SpawnFailure(String),
    #[error("oracle handshake failed: {0}")]
    HandshakeFailure(String),
    #[error("every attribute is constant; no interpretable features")]
    NoUsableFeatures,
    #[error("feature index {index} out of range (M = {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("rank k = {k} violates k <= min(2M, N) = {max}")]
    RankTooLarge { k: usize, max: usize },
    #[error("r = {r} clusters requested for {n} points")]
    TooManyClusters { r: usize, n: usize },
    #[error("parameter grid is empty")]
    EmptyGrid,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("category {category}: {source}")]
    InCategory {
        category: crate::data::Category,
        #[source]
        source: Box<Error>,
    },
    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            what,
            message: message.into(),
        }
    }
}
