use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("row {row}: expected {expected} cells, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("empty header name at column {column}")]
    EmptyHeader { column: usize },

    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),

    #[error("column `{0}` holds only missing cells; kind cannot be determined")]
    Undeterminable(String),

    #[error("column `{0}` is empty after dropping missing cells")]
    EmptyColumn(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("schema mismatch on column `{column}`: {reason}")]
    SchemaMismatch { column: String, reason: String },

    #[error("row {row}, column `{column}`: cannot parse `{value}`")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("all fitted standard deviations are zero; cannot place tail samples")]
    DegenerateMarginals,

    #[error("need {needed} synthetic rows but only {available} are available")]
    InsufficientSynthetic { needed: usize, available: usize },

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("duplicate cell for model `{model}` at level `{level}`")]
    DuplicateKey { model: String, level: String },

    #[error("{record}: AUC {value} outside [0, 1]")]
    AucRange { record: String, value: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) | Error::Domain(_) | Error::DuplicateKey { .. } => 2,
            _ => 3,
        }
    }
}
