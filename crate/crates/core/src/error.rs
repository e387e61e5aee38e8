use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema error in {table}: {message}")]
    Schema { table: String, message: String },

    #[error("{table}: row {row}, column `{column}`: cannot parse {value:?} as {kind}")]
    Cell {
        table: String,
        row: usize,
        column: String,
        value: String,
        kind: String,
    },

    #[error("validation failed: {message} ({} offending rows)", rows.len())]
    Validation { message: String, rows: Vec<String> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot split: {0}")]
    Split(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("degenerate training data: {0}")]
    SingleClass(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("empty vocabulary: {0}")]
    EmptyVocabulary(String),

    #[error("remote embedding protocol error: {0}")]
    Protocol(String),

    #[error("remote embedding request failed after {attempts} attempts: {message}")]
    Network { attempts: u32, message: String },

    #[error("template error in {name}: {message}")]
    Template { name: String, message: String },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Schema { .. } => "schema",
            Error::Cell { .. } => "cell",
            Error::Validation { .. } => "validation",
            Error::Config(_) => "config",
            Error::Split(_) => "split",
            Error::UndefinedMetric(_) => "undefined_metric",
            Error::SingleClass(_) => "single_class",
            Error::Dimension { .. } => "dimension",
            Error::EmptyVocabulary(_) => "empty_vocabulary",
            Error::Protocol(_) => "protocol",
            Error::Network { .. } => "network",
            Error::Template { .. } => "template",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
