//! Random-forest-style ensembles of small multilayer perceptrons.
//!
//! Every member of the ensemble is a single-hidden-layer softmax MLP trained on
//! all features but one, so a dataset with `N` features yields `N` members.
//! Member outputs are fused by one of three decision rules:
//!
//! - confidence-filtered majority voting,
//! - equiprobable averaging of member posteriors,
//! - averaging weighted by the inverse PCA eigenvalue of the feature each
//!   member leaves out (requires a whitened forest).
//!
//! The crate is split along the pipeline:
//!
//! - [`linalg`]: dense matrices and a cyclic Jacobi eigensolver.
//! - [`data`]: CSV ingestion, standardization and the inverted stratified
//!   K-fold protocol (train on one fold, validate on the rest).
//! - [`mlp`]: the member network, Adam, and the training loop.
//! - [`forest`]: feature subsets, whitening, priors and ensemble training.
//! - [`decision`]: the fusion rules.
//! - [`metrics`]: confusion matrices and weighted F1.
//! - [`io`]: the binary model file format.
//!
//! All arithmetic is `f64`. Training is deterministic for a given seed, also
//! when ensemble members are trained in parallel.

pub mod data;
pub mod decision;
pub mod error;
pub mod forest;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod mlp;
pub mod seed;

pub use data::{Dataset, FoldSplit, Standardizer};
pub use decision::{Decision, DecisionStrategy};
pub use error::{Error, Result};
pub use forest::{FeatureSubset, ForestModel, PriorMode, WhiteningTransform};
pub use linalg::{EigenDecomposition, Matrix};
pub use metrics::{ConfusionMatrix, EvalReport};
pub use mlp::{MlpModel, TrainConfig, TrainHistory};
