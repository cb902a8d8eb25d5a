use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, OtsaError>;

#[derive(Debug, Error)]
pub enum OtsaError {
    /// A value violates a documented precondition or invariant.
    #[error("invalid parameter: {0}")]
    Param(String),

    /// Two inputs that must agree in shape do not.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("initialization failed: {0}")]
    Init(String),

    /// A file or byte buffer failed to parse; `field` names the offending part.
    #[error("format error in {field}: {reason}")]
    Format { field: String, reason: String },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("success rate is undefined for an empty outcome list")]
    UndefinedRate,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl OtsaError {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        OtsaError::Param(msg.into())
    }

    pub(crate) fn format(field: impl Into<String>, reason: impl Into<String>) -> Self {
        OtsaError::Format {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        OtsaError::Io {
            path: path.into(),
            source,
        }
    }
}
