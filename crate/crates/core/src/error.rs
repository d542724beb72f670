use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed on-disk input (meta.json, PGM header, clip blob, model file).
    #[error("format error: {0}")]
    Format(String),

    #[error("night at {0} contains no frames")]
    EmptyNight(PathBuf),

    #[error("frame ordering error: {0}")]
    Ordering(String),

    /// Semantically invalid values in otherwise well-formed input.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("rank deficient design: {0}")]
    Rank(String),

    #[error("huber fit did not converge after {iterations} iterations (slope {slope}, intercept {intercept}, last relative change {change:e})")]
    NonConvergence {
        iterations: usize,
        slope: f64,
        intercept: f64,
        change: f64,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad configuration rather than bad input data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Shape(_))
    }

    /// True for errors caused by malformed or inconsistent input files.
    pub fn is_input_format(&self) -> bool {
        matches!(
            self,
            Error::Format(_) | Error::EmptyNight(_) | Error::Ordering(_) | Error::Validation(_)
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
