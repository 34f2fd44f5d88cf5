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
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },

    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("column {0:?} is not assigned to any party")]
    UnassignedColumn(String),
    #[error("party {0} holds no features")]
    EmptyParty(usize),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("record id intersection is empty")]
    EmptyIntersection,
    #[error("fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),

    #[error("key size {0} bits is below the 256-bit minimum")]
    KeyTooSmall(usize),
    #[error("value {0} exceeds the plaintext bound")]
    PlaintextOverflow(String),
    #[error("ciphertext was produced under a different key")]
    KeyMismatch,
    #[error("operation needs the secret key, which this party does not hold")]
    MissingSecretKey,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid parameter {name}: {detail}")]
    InvalidParameter { name: &'static str, detail: String },
    #[error("division by zero: hessian sum plus lambda is 0")]
    ZeroDenominator,
    #[error("label {0} is not valid for binary logistic loss")]
    UnsupportedLabel(f64),
    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),

    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("unknown record id {0:?}")]
    UnknownRecord(String),
    #[error("unknown feature {0}")]
    UnknownFeature(String),
    #[error("request would delete every feature")]
    AllFeaturesDeleted,
    #[error("compared models use different feature sets")]
    FeatureSetMismatch,
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(name: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            detail: detail.into(),
        }
    }
}
