use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum TafError {
    /// Operand dimensions do not line up (matrix shapes, sequence lengths,
    /// parameter array sizes).
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A caller-supplied value violates a precondition (non-finite parameter,
    /// zero tap count, out-of-range label, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Filesystem failure while reading or writing an artifact.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file exists but its contents are not what the format requires.
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },

    /// Checkpoint document could not be parsed or describes an impossible model.
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    /// Dataset-level problem: empty split, inconsistent feature dimension,
    /// class without examples.
    #[error("dataset: {0}")]
    Dataset(String),
}

pub type Result<T> = std::result::Result<T, TafError>;

impl TafError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TafError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        TafError::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
