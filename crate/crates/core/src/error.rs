use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("row {row}, column `{column}`: {message}")]
    Malformed {
        row: usize,
        column: String,
        message: String,
    },

    #[error("duplicate patient id `{0}`")]
    DuplicateId(String),

    #[error("unknown patient id `{0}`")]
    UnknownId(String),

    #[error("invalid cohort: {0}")]
    Cohort(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("dimension mismatch: expected {expected} columns, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("column `{0}` has fewer than two observed values")]
    InsufficientObserved(String),

    #[error("labels contain a single class; two classes are required")]
    SingleClass,

    #[error("class `{class}` has {count} members, fewer than k = {k} folds")]
    ClassTooSmall { class: String, count: usize, k: usize },

    #[error("record `{0}` lacks the label required for this operation")]
    MissingLabel(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(
        "perfect separation detected while fitting the nomogram; refit with a ridge penalty (lambda > 0)"
    )]
    PerfectSeparation,

    #[error("value {value} for `{name}` lies outside [{lo}, {hi}]")]
    OutOfRange {
        name: String,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("leakage: {0}")]
    Leakage(String),

    #[error("bundle schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("invalid request ({}): {message}", fields.join(", "))]
    Request { fields: Vec<String>, message: String },

    #[error("model bundle is missing {0}")]
    MissingStage(String),

    #[error("image error: {0}")]
    Image(String),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
