use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, BenchError>;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Core(#[from] rfmlp::Error),

    #[error("seed {seed}, fold {fold}, {method}: {source}")]
    Cell {
        seed: u64,
        fold: usize,
        method: String,
        #[source]
        source: rfmlp::Error,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("cannot parse config {path}: {source}")]
    ConfigFile {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },

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
}

impl BenchError {
    pub fn category(&self) -> &'static str {
        match self {
            BenchError::Core(e) | BenchError::Cell { source: e, .. } => e.category(),
            BenchError::Config(_) | BenchError::ConfigFile { .. } => "config",
            BenchError::Io { .. } => "io",
            BenchError::Csv { .. } => "parse",
        }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" | "argument" => 2,
            "io" => 3,
            "parse" | "data" => 4,
            "model-file" => 5,
            "dimension" => 6,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        BenchError::Csv {
            path: path.into(),
            source,
        }
    }
}
