use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("value outside the function domain: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Contract(String),

    /// A Poisson rate evaluated to zero where a positive count was observed.
    #[error("zero rate with positive count at measurement row {row}, column {column}")]
    Singularity { row: usize, column: usize },

    #[error("initial Lagrangian value is not finite ({0})")]
    Initialization(f64),

    #[error("invalid multiplier bracket [{lo:e}, {hi:e}]: {reason}")]
    Bracket { lo: f64, hi: f64, reason: String },

    #[error("no sign change of the constraint found within {steps} doublings/halvings (last multiplier {last_lambda:e})")]
    BracketNotFound { steps: usize, last_lambda: f64 },

    #[error("instance too large for exhaustive support search: {0}")]
    Guard(String),

    #[error("malformed instance document: {0}")]
    Format(String),

    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
