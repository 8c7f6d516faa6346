use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("name is empty after normalization (input {0:?})")]
    EmptyName(String),

    #[error("ingredient {0:?} has no name outside its processing marker")]
    EmptyCanonical(String),

    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("duplicate drug name {0:?}")]
    DuplicateDrug(String),

    #[error("drug {drug:?} lists ingredient {ingredient:?} more than once")]
    DuplicateIngredient { drug: String, ingredient: String },

    #[error("drug {0:?} has an empty ingredient list")]
    EmptyIngredients(String),

    #[error("cannot split an empty id list")]
    EmptySplit,

    #[error("corpus needs at least 2 records to build a dataset, found {0}")]
    TooFewRecords(usize),

    #[error("replacement pool too small for drug {drug:?}: need {needed}, have {available}")]
    PoolTooSmall {
        drug: String,
        needed: usize,
        available: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("expected a {expected} run, found {found}")]
    ProtocolMismatch { expected: String, found: String },

    #[error("{what} fingerprint mismatch: expected {expected}, found {found}")]
    FingerprintMismatch {
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error("confusion matrix is empty")]
    EmptyConfusion,

    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Runtime(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error: 2 for usage, input and configuration
    /// problems, 1 for failures that happen while doing the work.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Runtime(_) => 1,
            Error::Io { source, .. } if source.kind() != std::io::ErrorKind::NotFound => 1,
            _ => 2,
        }
    }
}
