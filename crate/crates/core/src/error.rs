use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("non-finite sample at channel {channel}, frame {frame}")]
    NonFinite { channel: usize, frame: usize },
    #[error("invalid audio layout: {0}")]
    Layout(String),
    #[error("invalid parameter {name}: {reason}")]
    Parameter { name: &'static str, reason: String },
    #[error("loudness unmeasurable: {0}")]
    Unmeasurable(String),
    #[error("unstable filter: {0}")]
    UnstableFilter(String),
    #[error("no templates configured")]
    NoTemplates,
    #[error("missing translation for keyword {keyword:?} in language {language:?}")]
    MissingTranslation { keyword: String, language: String },
    #[error("unknown stem tag {0:?}")]
    UnknownStem(String),
    #[error("no head configured for stem {0}")]
    MissingHead(String),
    #[error("empty eligible pool: {0}")]
    EmptyPool(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("degenerate label set: {0}")]
    DegenerateLabels(String),
    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("segment {index}: {source}")]
    AtSegment {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("splice input invalid: {0}")]
    Splice(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("fetcher: {0}")]
    Fetch(String),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter { name, reason: reason.into() }
    }

    pub(crate) fn at_path(self, path: impl Into<PathBuf>) -> Self {
        Error::File { path: path.into(), source: Box::new(self) }
    }
}
