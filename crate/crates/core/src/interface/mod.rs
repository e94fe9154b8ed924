//! Run configuration, persistence and the command-line front end.

pub mod cli;
pub mod config;
pub mod persist;

use thiserror::Error;

pub use persist::{load_model, save_model, write_report};

#[derive(Debug, Error, PartialEq)]
pub enum InterfaceError {
    #[error("io error: {0}")]
    Io(String),
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u64),
    #[error("schema error in field {0:?}")]
    SchemaError(String),
    #[error("input columns do not match the model: {0}")]
    ColumnMismatch(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("internal error: {0}")]
    Internal(String),
}
