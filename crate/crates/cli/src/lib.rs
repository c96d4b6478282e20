//! Benchmark harness and command-line tooling for `rfmlp` forests.
//!
//! - [`bench`]: inverted cross-validation of the baseline MLP and every
//!   fusion strategy, with summary tables.
//! - [`curves`]: per-epoch train, holdout and validation accuracy.
//! - [`predict`]: training a model file and classifying new rows.
//! - [`config`]: the TOML run configuration.

pub mod bench;
pub mod config;
pub mod curves;
pub mod error;
pub mod predict;
pub mod report;

pub use bench::{cmd_bench, run_bench, BenchmarkResult, Method, MethodSummary};
pub use config::{ResolvedRun, RunConfig, SplitMode};
pub use curves::{cmd_curves, run_curves, SeedCurves};
pub use error::{BenchError, Result};
pub use predict::{cmd_predict, cmd_train, PredictArgs};
