use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or rule file is malformed.
    #[error("configuration error: {0}")]
    Config(String),

    /// One or more required configuration keys are missing.
    #[error("missing configuration keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),

    /// An input file does not conform to its schema.
    #[error("{}:{line}:{column}: {message}", file.display())]
    Schema {
        file: PathBuf,
        line: u64,
        column: usize,
        message: String,
    },

    /// An argument is outside of the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("design matrix is rank deficient; collinear columns: {}", .0.join(", "))]
    RankDeficient(Vec<String>),

    #[error("complete or quasi-complete separation detected (coefficient {column} diverging)")]
    Separation { column: String },

    #[error("covariance matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no model in the search grid could be fit: {}", .0.join("; "))]
    AllFitsFailed(Vec<String>),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("missing exogenous input: {0}")]
    MissingExog(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Validation failures (bad config, bad input files) as opposed to
    /// failures raised while computing.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::MissingKeys(_) | Error::Schema { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(
        file: impl Into<PathBuf>,
        line: u64,
        column: usize,
        message: impl Into<String>,
    ) -> Self {
        Error::Schema {
            file: file.into(),
            line,
            column,
            message: message.into(),
        }
    }
}
