use std::path::PathBuf;

use thiserror::Error;

use crate::corpus::Label;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed row {row}: {message}")]
    MalformedRow {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("unknown label {label:?} for scheme {scheme}")]
    UnknownLabel { scheme: String, label: String },

    #[error(
        "not enough {class} documents: need {required}, have {available} \
         (maximum feasible pool size is {max_pool_size})"
    )]
    InsufficientClass {
        class: Label,
        required: usize,
        available: usize,
        max_pool_size: usize,
    },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("labeled set contains only class {0}")]
    SingleClass(Label),

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("requested {requested} items but only {available} are unlabeled")]
    BatchTooLarge { requested: usize, available: usize },

    #[error("greedy core-set needs at least one labeled point")]
    EmptyLabeledSet,

    #[error("pool index {0} is already labeled")]
    AlreadyLabeled(usize),

    #[error("pool index {0} is out of range")]
    UnknownIndex(usize),

    #[error("empty learning curve")]
    EmptyCurve,

    #[error("learning curves are misaligned: {0}")]
    MisalignedCurves(String),

    #[error("imbalance mismatch: trained on {train}, tested on {test}")]
    ImbalanceMismatch { train: f64, test: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("model has not been trained")]
    Untrained,

    #[error("plugin error: {0}")]
    Plugin(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
