use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),

    #[error("degenerate contour: {0}")]
    DegenerateContour(String),

    #[error("mask has no foreground pixels")]
    EmptyMask,

    #[error("point lies on the polygon boundary")]
    OnBoundary,

    #[error("scene has no usable room segments")]
    EmptyScene,

    #[error("invalid parameters: {0}")]
    Spec(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("search budget exceeded: {leaves} leaves > {limit}")]
    BudgetExceeded { leaves: u128, limit: u128 },

    #[error("{path}: parse error at {context}: {message}")]
    Parse {
        path: PathBuf,
        context: String,
        message: String,
    },

    #[error("{path}: unsupported schema version {found} (expected {expected})")]
    Version {
        path: PathBuf,
        found: u64,
        expected: u64,
    },

    #[error("{path}: {message}")]
    Validation { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(
        path: impl Into<PathBuf>,
        context: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Parse {
            path: path.into(),
            context: context.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by malformed or missing inputs.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Version { .. }
                | Error::Validation { .. }
                | Error::Io { .. }
                | Error::Spec(_)
        )
    }
}
