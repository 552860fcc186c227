use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("probability {0} outside the open interval (0, 1)")]
    Domain(f64),

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("matrix factorization failed: {0}")]
    Factorization(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("alignment failed: {0}")]
    Alignment(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps a CSV error, keeping the record line when the reader knows it.
    pub(crate) fn from_csv(err: csv::Error) -> Self {
        let line = err.position().map(|p| p.line()).unwrap_or(0);
        match err.kind() {
            csv::ErrorKind::Io(_) => Error::Io(std::io::Error::other(err.to_string())),
            _ => Error::Parse {
                line,
                message: err.to_string(),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
