use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("{}: no records", .0.display())]
    EmptyDataset(PathBuf),

    #[error("invalid relation: {0}")]
    InvalidRelation(String),

    #[error("need at least {required} sentences, got {actual}")]
    TooFewSentences { required: usize, actual: usize },

    #[error("requested {requested} pairs but only {available} distinct ordered pairs exist")]
    TooManyPairs { requested: usize, available: usize },

    #[error("element {0:?} does not occur in the text")]
    Ungrounded(String),

    #[error("cannot serialize relations: {0}")]
    Serialize(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("input of {tokens} tokens does not fit context length {context}")]
    InputTooLong { tokens: usize, context: usize },

    #[error("no training pair fits the context length ({dropped} dropped)")]
    NoTrainablePairs { dropped: usize },

    #[error("sentence ids differ: missing predictions {missing_predictions:?}, missing gold {missing_gold:?}")]
    IdMismatch {
        missing_predictions: Vec<String>,
        missing_gold: Vec<String>,
    },

    #[error("invalid tag sequence: {0}")]
    InvalidTags(String),

    #[error("no taggable sentence ({skipped} skipped as ungrounded)")]
    NoTaggableSentences { skipped: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("backend: {0}")]
    Backend(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the failure is caused by bad input or usage rather than a
    /// fault while running.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Malformed { .. }
                | Error::EmptyDataset(_)
                | Error::InvalidRelation(_)
                | Error::TooFewSentences { .. }
                | Error::TooManyPairs { .. }
                | Error::Config(_)
                | Error::IdMismatch { .. }
                | Error::NoTaggableSentences { .. }
                | Error::Io { .. }
        )
    }
}
