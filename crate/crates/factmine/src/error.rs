use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] factmine_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}:{line}: malformed record: {message}", path.display())]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}:{line}: {source}", path.display())]
    AtLine {
        path: PathBuf,
        line: usize,
        source: factmine_core::Error,
    },
    #[error("{}: unsupported schema version {found} (expected {expected})", path.display())]
    SchemaVersion {
        path: PathBuf,
        found: String,
        expected: String,
    },
    #[error("{}: {message}", path.display())]
    BadBinary { path: PathBuf, message: String },
    #[error("config: {0}")]
    Config(String),
}

/// What goes to stderr as one JSON line when a command fails.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
}

impl Error {
    pub fn io(path: &Path, source: io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn malformed(path: &Path, line: usize, message: impl Into<String>) -> Self {
        Error::MalformedRecord {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    pub fn at_line(path: &Path, line: usize, source: factmine_core::Error) -> Self {
        Error::AtLine {
            path: path.to_path_buf(),
            line,
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Core(e) | Error::AtLine { source: e, .. } => e.kind(),
            Error::Io { .. } => "Io",
            Error::MalformedRecord { .. } => "MalformedRecord",
            Error::SchemaVersion { .. } => "SchemaVersion",
            Error::BadBinary { .. } => "BadBinary",
            Error::Config(_) => "InvalidConfig",
        }
    }

    pub fn record(&self) -> ErrorRecord {
        let (file, line) = match self {
            Error::Io { path, .. } | Error::SchemaVersion { path, .. } | Error::BadBinary { path, .. } => {
                (Some(path.display().to_string()), None)
            }
            Error::MalformedRecord { path, line, .. } | Error::AtLine { path, line, .. } => {
                (Some(path.display().to_string()), Some(*line))
            }
            _ => (None, None),
        };
        ErrorRecord {
            error: self.kind(),
            message: self.to_string(),
            file,
            line,
        }
    }
}
