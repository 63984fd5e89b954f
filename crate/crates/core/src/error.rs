use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown symptom `{0}`")]
    UnknownSymptom(String),
    #[error("unknown disease `{0}`")]
    UnknownDisease(String),
    #[error("unknown group `{0}`")]
    UnknownGroup(String),
    #[error("invalid ontology: {0}")]
    InvalidOntology(String),
    #[error("invalid probability table: {0}")]
    InvalidTable(String),
    #[error("no symptom sampled true for disease `{disease}` after {attempts} attempts")]
    RetryBudgetExhausted { disease: String, attempts: usize },
    #[error("malformed record {index}: {reason}")]
    MalformedRecord { index: usize, reason: String },
    #[error("empty goal source")]
    EmptyGoalSource,
    #[error("episode already terminated")]
    EpisodeTerminated,
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("index {index} out of range for {len} outputs")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("training needs at least two classes, got {0}")]
    SingleClass(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("bad checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },
    #[error("empty trace")]
    EmptyTrace,
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("JSON error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }
}
