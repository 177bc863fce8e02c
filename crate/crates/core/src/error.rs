use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A material set or scheme parameter violates its invariants.
    #[error("invalid material set: {0}")]
    InvalidMaterial(String),

    /// Grid, boundary conditions or other model data are inconsistent.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid filter configuration: {0}")]
    InvalidFilter(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    /// Factorization failed or the residual bound was not met.
    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error("optimizer failed: {0}")]
    Optimizer(String),

    /// A run aborted; `iteration` is the last iteration that completed.
    #[error("optimization aborted at iteration {iteration}: {source}")]
    RunAborted {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    /// `line` is 1-based; `None` for problems with the file as a whole,
    /// such as a missing key.
    #[error("config {}: key `{key}`: {message}", location(.line))]
    Config {
        line: Option<usize>,
        key: String,
        message: String,
    },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn location(line: &Option<usize>) -> String {
    match line {
        Some(n) => format!("line {n}"),
        None => "file".to_string(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
        if expected == actual {
            Ok(())
        } else {
            Err(Error::Dimension {
                what,
                expected,
                actual,
            })
        }
    }
}
