use thiserror::Error;

/// Error type shared by every pipeline stage.
///
/// Variants are grouped by how the CLI maps them to exit codes: usage and
/// configuration problems, data problems (bad inputs, shape mismatches,
/// missing upstream artifacts), and numeric divergence during training.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("rejected input: {0}")]
    RejectedInput(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("format mismatch: {0}")]
    FormatMismatch(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },

    #[error("time axis mismatch: {0}")]
    Alignment(String),

    #[error("accounting error: {0}")]
    Accounting(String),

    #[error("invalid injection spec: {0}")]
    Spec(String),

    #[error("malformed artifact {path}: {detail}")]
    Artifact { path: String, detail: String },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn artifact(path: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Artifact {
            path: path.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
