use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("invalid label mapping: {0}")]
    InvalidMapping(String),

    #[error("invalid sentence: {0}")]
    InvalidSentence(String),

    #[error("invalid control tokens: {0}")]
    InvalidControlTokens(String),

    #[error("invalid tag `{0}`")]
    InvalidTag(String),

    #[error("target label `{0}` already appears in the known context")]
    DuplicateTarget(String),

    #[error("allowed token set is empty")]
    EmptyAllowedSet,

    #[error("scorer called with an empty candidate list")]
    EmptyCandidates,

    #[error("scorer failure: {0}")]
    ScorerFailure(String),

    #[error("conflicting gold answers for context `{context}`: `{first}` vs `{second}`")]
    ConflictingGold {
        context: String,
        first: String,
        second: String,
    },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("missing prediction for query {0}")]
    MissingPrediction(usize),

    #[error("empty input")]
    EmptyInput,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{path}: at `{json_path}`: {message}")]
    JsonParse {
        path: String,
        json_path: String,
        message: String,
    },

    #[error("support set infeasible: label `{0}` does not occur often enough")]
    SupportInfeasible(String),

    #[error("fixture mismatch: {0}")]
    FixtureMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
