use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library. The CLI maps `Io` and `Usage` to exit
/// code 2 and everything else to exit code 1.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate doc_id {0:?}")]
    DuplicateDocId(String),

    #[error("tuple on line {line} references unknown doc_id {doc_id:?}")]
    DanglingDocId { doc_id: String, line: usize },

    #[error("unknown doc_id {0:?}")]
    UnknownDocument(String),

    #[error("no documents for entity {0:?}")]
    NoDocuments(String),

    #[error("ground truths disagree on (entity, relation): {0}")]
    GroundTruthMismatch(String),

    #[error("span {start}..{end} is invalid for text of {len} bytes")]
    SpanOutOfBounds { start: usize, end: usize, len: usize },

    #[error("spans overlap at {0}..{1}")]
    OverlappingSpans(usize, usize),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("training labels contain a single class")]
    SingleClass,

    #[error("missing embeddings for doc_ids: {}", .0.join(", "))]
    MissingEmbeddings(Vec<String>),

    #[error("no embedding for doc_id {0:?}")]
    MissingEmbedding(String),

    #[error("no mentions recorded for doc_id {0:?}")]
    MissingMentions(String),

    #[error("embedding file format: {0}")]
    Format(String),

    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the invocation or the filesystem rather than the data.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Usage(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
