//! Crate-level error and its exit-code classification.

use thiserror::Error;

use crate::calibration::CalibrationError;
use crate::catalog::CatalogError;
use crate::embedding::EmbedError;
use crate::enrichment::EnrichmentError;
use crate::evaluation::EvalError;
use crate::search::SearchError;

/// Coarse classification used by the command-line driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed input files or configuration.
    Input,
    /// An external service (embedding or selector endpoint) failed.
    External,
    /// Data is well formed but cannot support the computation (e.g. one-class calibration).
    Degenerate,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Input => 2,
            ErrorClass::External => 3,
            ErrorClass::Degenerate => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Enrichment(#[from] EnrichmentError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Embed(e) => e.class(),
            Error::Enrichment(EnrichmentError::Embed(e)) => e.class(),
            Error::Enrichment(_) => ErrorClass::Input,
            Error::Calibration(CalibrationError::Embed(e)) => e.class(),
            Error::Calibration(e) if e.is_degenerate() => ErrorClass::Degenerate,
            Error::Search(SearchError::Degenerate { .. }) => ErrorClass::Degenerate,
            Error::Eval(EvalError::Empty) => ErrorClass::Degenerate,
            _ => ErrorClass::Input,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
