use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    Convergence { sweeps: usize, off_norm: f64 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("cannot parse {value:?} at row {row}, column {column:?} as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("invalid dataset: {0}")]
    Data(String),

    #[error("stratification impossible: class {class} has {count} samples, need at least {required}")]
    Stratification {
        class: usize,
        count: usize,
        required: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported model file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("malformed model file: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    /// Short category name, used for CLI exit messages.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::Argument(_) => "argument",
            Error::Convergence { .. } => "convergence",
            Error::Io { .. } => "io",
            Error::Csv { .. } | Error::Parse { .. } => "parse",
            Error::Data(_) | Error::Stratification { .. } => "data",
            Error::Config(_) => "config",
            Error::Version { .. } | Error::Format(_) => "model-file",
        }
    }
}
