use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("payload/index mismatch: {0}")]
    PayloadMismatch(String),
    #[error("item {id}: {reason}")]
    InvalidItem { id: String, reason: String },
    #[error("duplicate item id {0}")]
    DuplicateId(String),
    #[error("unknown category {0}")]
    UnknownCategory(String),
    #[error("unknown item {0}")]
    UnknownItem(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("category {category} has {count} usable items, need at least 2")]
    TooFewItems { category: String, count: usize },
    #[error("latent dimensionality q={q} out of range 1..={max}")]
    LatentDimOutOfRange { q: usize, max: usize },
    #[error("within-class scatter is singular even after ridge regularization")]
    SingularScatter,
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("no candidate satisfies the selection policy; nearest achievable f_L = {nearest}")]
    NoQualifyingCandidate { nearest: f64 },

    #[error("invalid mask configuration: {0}")]
    InvalidConfig(String),
    #[error("kernel factor for the {axis} axis is not positive definite")]
    NotPositiveDefinite { axis: &'static str },
    #[error("every mask received zero classifier weight")]
    AllMasksRejected,
    #[error("classifier failed on mask {index}: {reason}")]
    Classifier { index: usize, reason: String },
    #[error("classifier protocol error: {0}")]
    Protocol(String),

    #[error("insufficient eligible pool: {0}")]
    InsufficientPool(String),
    #[error("trial {index}: {source}")]
    Trial {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("malformed rating row for ({y_star}, {y_alt}): {reason}")]
    MalformedRating {
        y_star: String,
        y_alt: String,
        reason: String,
    },

    #[error("duplicate response from {participant} for trial {trial_index}")]
    DuplicateResponse {
        participant: String,
        trial_index: usize,
    },
    #[error("response references missing trial {0}")]
    DanglingTrial(usize),
    #[error("response choice {choice} is not an option of trial {trial_index}")]
    InvalidChoice { trial_index: usize, choice: String },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
