use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::bench::SkipRecord;
use crate::store::StoreError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Core(#[from] faildetect_core::Error),
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
    #[error("invalid synthetic config: {0}")]
    InvalidSynthetic(String),
    #[error("{} score/seed combination(s) skipped in strict mode", .0.len())]
    StrictSkips(Vec<SkipRecord>),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn json(path: &Path, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Stable identifier of the error variant for machine-readable output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Store(_) => "store",
            Error::Core(_) => "core",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
            Error::InvalidConfig(_) => "invalid_config",
            Error::InvalidSynthetic(_) => "invalid_synthetic",
            Error::StrictSkips(_) => "strict_skips",
        }
    }

    pub fn report(&self) -> ErrorReport {
        ErrorReport {
            error: self.kind(),
            message: self.to_string(),
            skipped: match self {
                Error::StrictSkips(s) => s.clone(),
                _ => Vec::new(),
            },
        }
    }
}

/// JSON body printed by the CLI on failure.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<SkipRecord>,
}
