use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav error on {path}: {message}")]
    Wav { path: PathBuf, message: String },

    #[error("unsupported audio: {0}")]
    UnsupportedAudio(String),

    #[error("{path}:{line}: malformed record: {message}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("query references unknown passage id `{0}`")]
    DanglingReference(String),

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("sample rate mismatch: expected {expected} Hz, found {found} Hz ({context})")]
    SampleRateMismatch {
        expected: u32,
        found: u32,
        context: String,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("signal too short: {samples} samples, need at least {required}")]
    SignalTooShort { samples: usize, required: usize },

    #[error("zero-power signal")]
    ZeroPower,

    #[error("zero-norm vector: {0}")]
    ZeroVector(String),

    #[error("non-finite values in {0}")]
    NonFinite(String),

    #[error("corrupt file {path}: {message}")]
    Corrupt { path: PathBuf, message: String },

    #[error("row {row} of index has norm {norm}, expected 1")]
    NormViolation { row: usize, norm: f64 },

    #[error("generator error: {0}")]
    Generator(String),

    #[error("mode mismatch: {0}")]
    ModeMismatch(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Corrupt {
            path: path.into(),
            message: message.into(),
        }
    }
}
