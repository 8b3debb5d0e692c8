use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, mapped onto CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error in {}: {message}", path.display())]
    Csv { path: PathBuf, message: String },
    #[error("ragged row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),
    #[error("duplicate row id {0:?}")]
    DuplicateRowId(String),
    #[error("invalid metadata for column {column:?}: {message}")]
    Metadata { column: String, message: String },
    #[error("value {value} in row {row} is outside the admissible range [{lo}, {hi}]")]
    Domain {
        row: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("row {0} has no observed cells")]
    EmptyRow(usize),
    #[error("column {0} has no observed cells")]
    EmptyColumn(usize),
    #[error("no donor rows available to impute cell ({row}, {column})")]
    NoCandidates { row: usize, column: usize },
    #[error("feature subsets have an empty intersection; increase top_k")]
    EmptyIntersection,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite input value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },
    #[error("solver did not converge after {iterations} iterations (last objective {objective})")]
    NonConvergence { iterations: usize, objective: f64 },
    #[error("black-box returned invalid probability {value} for perturbation sample {sample}")]
    InvalidProbability { sample: usize, value: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("JSON error in {}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("stage {stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter(_) | Error::Config(_) => ErrorKind::Config,
            Error::NonConvergence { .. }
            | Error::InvalidProbability { .. }
            | Error::Numerical(_) => ErrorKind::Numerical,
            Error::Stage { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage: stage.to_string(),
                source: Box::new(e),
            },
        }
    }
}
