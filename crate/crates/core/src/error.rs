use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: file is empty or has no data rows")]
    EmptyFile { path: PathBuf },

    #[error("{path}:{line}: missing or non-numeric value in column `{column}`")]
    MissingValue {
        path: PathBuf,
        line: usize,
        column: String,
    },

    #[error("target column `{column}` has {distinct} distinct values, expected exactly 2")]
    NotBinaryTarget { column: String, distinct: usize },

    #[error("unknown target column `{0}`")]
    UnknownColumn(String),

    #[error("positive label `{0}` does not occur in the target column")]
    UnknownPositiveLabel(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("unknown hyperparameter `{name}` for {model}; valid names: {valid}")]
    UnknownParam {
        model: String,
        name: String,
        valid: String,
    },

    #[error("pairwise grid needs two distinct hyperparameters, got `{0}` twice")]
    SameParam(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("feature count mismatch: model trained on {expected} columns, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("label vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("label vectors are empty")]
    Empty,

    #[error("no comparable (non-default, non-failed) entry")]
    NoComparableEntry,

    #[error("entry {config_id} varies `{param}`, which is outside the marginal scope `{scope}`")]
    NotMarginal {
        config_id: String,
        param: String,
        scope: String,
    },

    #[error("entry {config_id} varies `{param}`, which is outside the joint scope ({h1}, {h2})")]
    NotPairwise {
        config_id: String,
        param: String,
        h1: String,
        h2: String,
    },

    #[error("invalid prediction set: {0}")]
    InvalidPredictionSet(String),

    #[error("line {line}: {message}")]
    SchemaError { line: usize, message: String },

    #[error("no row is flagged as the default configuration")]
    NoDefaultRow,

    #[error("line {line}: second row flagged as default")]
    DuplicateDefault { line: usize },

    #[error("line {line}: label value `{value}` is not 0 or 1")]
    LabelDomainError { line: usize, value: String },

    #[error("non-finite measure in bivariate cell {0}")]
    NonFinite(usize),

    #[error("{0} exists; pass --force to overwrite")]
    OutputExists(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
