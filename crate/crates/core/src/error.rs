use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("duplicate document id `{0}`")]
    DuplicateDocId(String),

    #[error("unknown document id `{0}`")]
    UnknownDoc(String),

    #[error("bad magic: not an {expected} file")]
    BadMagic { expected: &'static str },

    #[error("unsupported format version {found} (this build reads version {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },

    #[error("truncated file: {0}")]
    Truncated(&'static str),

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("duplicate entry: {0}")]
    Duplicate(String),

    #[error("score {score} for ({qt}, {dt}) is outside [0, 1]")]
    ScoreOutOfRange { qt: String, dt: String, score: f64 },

    #[error("no score for query `{qid}` and document `{doc_id}`")]
    MissingScore { qid: String, doc_id: String },

    #[error("invalid attention tensor: {0}")]
    Attention(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
}

impl Error {
    pub(crate) fn parse(source_name: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidInput(message.into())
    }
}
