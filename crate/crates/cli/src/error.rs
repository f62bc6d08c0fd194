use std::path::PathBuf;

use thiserror::Error;

/// Process exit statuses.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_TOLERANCE: i32 = 3;
pub const EXIT_IO: i32 = 4;
/// `report` found no result records.
pub const EXIT_NO_RECORDS: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config syntax error: {0}")]
    Syntax(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config type mismatch for `{key}`: {reason}")]
    TypeMismatch { key: String, reason: String },
    #[error("constraint violated for `{field}`: {reason}")]
    Constraint { field: &'static str, reason: String },
    #[error("cannot read config {path}: {source}")]
    ConfigIo {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Module {
        context: String,
        source: kpzlab::Error,
    },
    #[error("tolerance check failed: {0}")]
    Tolerance(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("record {path}: schema version {found}, expected {expected}")]
    SchemaMismatch {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("malformed record {path}: {reason}")]
    BadRecord { path: PathBuf, reason: String },
    #[error("no result records in {0}")]
    NoRecords(PathBuf),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use kpzlab::Error as E;
        match self {
            CliError::Syntax(_)
            | CliError::UnknownKey(_)
            | CliError::TypeMismatch { .. }
            | CliError::Constraint { .. }
            | CliError::ConfigIo { .. } => EXIT_CONFIG,
            CliError::Module { source, .. } => match source {
                E::InvalidGrid(_)
                | E::InvalidParameter { .. }
                | E::Domain(_)
                | E::GridMismatch(_)
                | E::Underpowered(_)
                | E::MissingRecord(_) => EXIT_CONFIG,
                E::Quadrature(_) | E::Truncation(_) | E::NestedBias(_) | E::Internal(_) => {
                    EXIT_TOLERANCE
                }
                E::Io(_) | E::Json(_) => EXIT_IO,
            },
            CliError::Tolerance(_) => EXIT_TOLERANCE,
            CliError::Io { .. } | CliError::SchemaMismatch { .. } | CliError::BadRecord { .. } => {
                EXIT_IO
            }
            CliError::NoRecords(_) => EXIT_NO_RECORDS,
        }
    }
}

/// Attaches a context string to a module error.
pub trait Context<T> {
    fn context(self, what: &str) -> Result<T, CliError>;
}

impl<T> Context<T> for kpzlab::Result<T> {
    fn context(self, what: &str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Module {
            context: what.to_string(),
            source,
        })
    }
}
