//! Error classes and their process exit codes.
//!
//! | code | class |
//! |------|-------|
//! | 0 | success |
//! | 2 | usage (bad flags) |
//! | 3 | I/O |
//! | 4 | invalid configuration |
//! | 5 | format/config version mismatch |
//! | 6 | computation error (empty sample, degenerate fit, ...) |
//! | 7 | missing input file |
//! | 8 | malformed input file |

use ionshelf::formats::FormatError;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("version mismatch: {0}")]
    SchemaVersion(String),
    #[error("{context}: {msg}")]
    Compute { context: String, msg: String },
    #[error("missing input: {}", .0.display())]
    MissingInput(PathBuf),
    #[error("{path}: {msg}")]
    BadInput { path: PathBuf, msg: String },
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
            CliError::InvalidConfig(_) => 4,
            CliError::SchemaVersion(_) => 5,
            CliError::Compute { .. } => 6,
            CliError::MissingInput(_) => 7,
            CliError::BadInput { .. } => 8,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            CliError::MissingInput(path.to_path_buf())
        } else {
            CliError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }

    /// Reading `path` failed while parsing its contents.
    pub fn format(path: &Path, e: FormatError) -> Self {
        match e {
            FormatError::Io(source) => CliError::Io {
                path: path.to_path_buf(),
                source,
            },
            FormatError::SchemaVersionMismatch { .. } => {
                CliError::SchemaVersion(format!("{}: {e}", path.display()))
            }
            other => CliError::BadInput {
                path: path.to_path_buf(),
                msg: other.to_string(),
            },
        }
    }

    pub fn compute(context: impl Into<String>, e: impl std::fmt::Display) -> Self {
        CliError::Compute {
            context: context.into(),
            msg: e.to_string(),
        }
    }

    /// Short class name, as printed on stderr and stored in manifests.
    pub fn class(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::InvalidConfig(_) => "invalid_config",
            CliError::SchemaVersion(_) => "schema_version_mismatch",
            CliError::Compute { .. } => "compute",
            CliError::MissingInput(_) => "missing_input",
            CliError::BadInput { .. } => "bad_input",
        }
    }
}
