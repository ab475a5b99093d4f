use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{0} requires a single-output network (k = 1)")]
    RequiresSingleOutput(&'static str),

    #[error("parse error in {source_name} at byte offset {offset}: {message}")]
    Parse {
        source_name: String,
        offset: usize,
        message: String,
    },

    #[error("training diverged at epoch {epoch}: {message}")]
    Diverged { epoch: usize, message: String },

    #[error("{what} did not converge after {iterations} iterations")]
    NotConverged {
        what: &'static str,
        iterations: usize,
    },

    #[error("could not generate a non-degenerate teacher after {attempts} attempts")]
    DegenerateTeacher { attempts: usize },

    #[error("missing dataset file {path}: {hint}")]
    MissingDataset { path: PathBuf, hint: String },

    #[error("I/O error on {path}: {source}")]
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

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                context,
                expected,
                found,
            })
        }
    }
}
