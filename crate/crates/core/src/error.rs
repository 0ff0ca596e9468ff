use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("I/O error: {0}")]
    Stream(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
    #[error("no genre in {0:?} maps to Action, Comedy, Drama or Thriller")]
    UnmappedGenre(Vec<String>),
    #[error("duplicate film id `{0}` in catalog")]
    DuplicateFilm(String),
    #[error("catalog row {row}: year {year} outside [1950, 2024]")]
    YearOutOfRange { row: usize, year: i32 },
    #[error("catalog row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty selection: {0}")]
    EmptySelection(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("operation not supported for {0} loss")]
    UnsupportedForLoss(&'static str),
    #[error("no scored content: {0}")]
    NoScoredContent(String),
    #[error("transport error for batch items {start}..{end}: {message}")]
    Transport {
        start: usize,
        end: usize,
        message: String,
    },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
