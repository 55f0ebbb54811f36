use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the crate.
///
/// The variants are grouped so the CLI can map them onto exit codes:
/// data problems, optimization failures and configuration problems.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("volatility exponent {exponent} exceeds the overflow guard (|x| > 700){}", fmt_time(*.time))]
    VolatilityOverflow { exponent: f64, time: Option<usize> },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite log-likelihood at parameter index {index} during finite differencing")]
    NonFiniteGradient { index: usize },

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("parse error in {path} at row {row}{}: {message}", fmt_col(.column))]
    Parse {
        path: PathBuf,
        row: usize,
        column: Option<String>,
        message: String,
    },

    #[error("missing column `{column}` in {path}")]
    MissingColumn { path: PathBuf, column: String },

    #[error("configuration error: {0}")]
    Config(String),

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

fn fmt_time(time: Option<usize>) -> String {
    match time {
        Some(t) => format!(" at time index {t}"),
        None => String::new(),
    }
}

fn fmt_col(col: &Option<String>) -> String {
    match col {
        Some(c) => format!(", column `{c}`"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn dims(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            actual,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
