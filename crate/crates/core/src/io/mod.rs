//! Plain-text formats shared by every stage: `key=value` configs and numeric CSV tables.

mod kv;
mod table;

pub use kv::KeyValues;
pub use table::{read_table, write_table, Table};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(String),
    #[error("line {line}: expected `key=value`, found {text:?}")]
    MalformedLine { line: usize, text: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("key `{key}`: cannot parse {value:?}")]
    BadValue { key: String, value: String },
    #[error("unexpected header: expected {expected:?}, found {found:?}")]
    Header { expected: String, found: String },
    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("row {row}, column `{column}`: {reason}")]
    BadField { row: usize, column: String, reason: String },
    #[error("{0}")]
    Invalid(String),
}

impl From<csv::Error> for FormatError {
    fn from(e: csv::Error) -> Self {
        FormatError::Csv(e.to_string())
    }
}
