use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("invalid choice event: {0}")]
    InvalidEvent(String),

    #[error("no available alternative in choice event")]
    NoAvailableAlternative,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}: {value}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        value: f64,
    },

    #[error("{path}:{line}: {issue}")]
    Data {
        path: PathBuf,
        line: u64,
        issue: DataIssue,
    },

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Validation failures when loading a choice dataset.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataIssue {
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("row has {actual} fields, expected {expected}")]
    RaggedRow { expected: usize, actual: usize },
    #[error("cannot parse `{value}` in column `{column}`")]
    BadValue { column: String, value: String },
    #[error("event `{event_id}` has more than one chosen alternative")]
    DuplicateChosen { event_id: String },
    #[error("event `{event_id}` has no chosen alternative")]
    NoChosen { event_id: String },
    #[error("event `{event_id}`: chosen alternative is unavailable")]
    ChosenUnavailable { event_id: String },
    #[error("event `{event_id}`: alt_index {found}, expected {expected}")]
    NonContiguousAlternative {
        event_id: String,
        expected: usize,
        found: usize,
    },
    #[error("event `{event_id}` rows are not contiguous")]
    SplitEvent { event_id: String },
    #[error("customer row for unknown event `{event_id}`")]
    UnknownCustomer { event_id: String },
    #[error("duplicate customer row for event `{event_id}`")]
    DuplicateCustomer { event_id: String },
    #[error("no customer row for event `{event_id}`")]
    MissingCustomer { event_id: String },
    #[error("empty dataset")]
    Empty,
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            actual,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
