use thiserror::Error;

use crate::dataset::ColumnKind;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed csv: {message}")]
    Csv { line: u64, message: String },
    #[error("missing header row")]
    MissingHeader,
    #[error("duplicate column name `{0}` in header")]
    DuplicateColumn(String),
    #[error("line {line}: expected {expected} cells, found {found}")]
    ColumnCount { line: u64, expected: usize, found: usize },
    #[error("line {line}, column `{column}`: cannot parse {value:?} as {kind}")]
    Parse {
        line: u64,
        column: String,
        value: String,
        kind: ColumnKind,
    },
    #[error("schema hint names unknown column `{0}`")]
    UnknownHintColumn(String),
}

/// A request, predicate or config that does not fit the schema it targets.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidationError {
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("column `{column}` has kind {kind}: {detail}")]
    KindMismatch {
        column: String,
        kind: ColumnKind,
        detail: String,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl ValidationError {
    pub(crate) fn kind(column: &str, kind: ColumnKind, detail: impl Into<String>) -> Self {
        ValidationError::KindMismatch {
            column: column.to_string(),
            kind,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        ValidationError::Config(msg.into())
    }
}
