//! Run configuration: a TOML file plus command-line overrides.
//!
//! Every key is optional. Defaults:
//!
//! ```toml
//! data = "data/iris.csv"        # delimited file with a header row
//! label_column = "class"
//! delimiter = ","               # single character, "\t" for tabs
//! k_folds = 10                  # inverted K-fold: train on 1 fold, validate on K-1
//! seeds = [0, 1, 2, 3, 4]
//! split = "inverted_kfold"      # or "per_class"
//! per_class = 5                 # training samples per class for split = "per_class"
//! strategies = ["vote", "equiprobable", "weighted"]
//! vote_threshold = 0.5
//! include_baseline_mlp = true
//! whiten = false                # forced on when "weighted" is requested
//! curve_fold = 0                # fold used by the curves command
//! threads = 0                   # 0 = one per core
//! output_dir = "results"
//!
//! [train]
//! hidden = 100
//! epochs = 100
//! batches_per_epoch = 200
//! batch_size = 0                # 0 = min(32, training rows)
//! lr_initial = 1e-3
//! lr_after_drop = 1e-4
//! lr_drop_epoch = 50
//! early_stop_patience = 10
//! holdout_fraction = 0.2
//! ```

use std::path::{Path, PathBuf};

use rfmlp::{DecisionStrategy, TrainConfig};
use serde::Deserialize;

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    InvertedKfold,
    PerClass,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub hidden: usize,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub lr_initial: f64,
    pub lr_after_drop: f64,
    pub lr_drop_epoch: usize,
    pub early_stop_patience: usize,
    pub holdout_fraction: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            hidden: d.hidden,
            epochs: d.epochs,
            batches_per_epoch: d.batches_per_epoch,
            batch_size: 0,
            lr_initial: d.lr_initial,
            lr_after_drop: d.lr_after_drop,
            lr_drop_epoch: d.lr_drop_epoch,
            early_stop_patience: d.early_stop_patience,
            holdout_fraction: d.holdout_fraction,
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self) -> TrainConfig {
        TrainConfig {
            hidden: self.hidden,
            epochs: self.epochs,
            batches_per_epoch: self.batches_per_epoch,
            batch_size: (self.batch_size > 0).then_some(self.batch_size),
            lr_initial: self.lr_initial,
            lr_after_drop: self.lr_after_drop,
            lr_drop_epoch: self.lr_drop_epoch,
            early_stop_patience: self.early_stop_patience,
            holdout_fraction: self.holdout_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: PathBuf,
    pub label_column: String,
    pub delimiter: String,
    pub k_folds: usize,
    pub seeds: Vec<u64>,
    pub split: SplitMode,
    pub per_class: usize,
    pub strategies: Vec<String>,
    pub vote_threshold: f64,
    pub include_baseline_mlp: bool,
    pub whiten: bool,
    pub curve_fold: usize,
    pub threads: usize,
    pub output_dir: PathBuf,
    pub train: TrainSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: PathBuf::from("data/iris.csv"),
            label_column: "class".into(),
            delimiter: ",".into(),
            k_folds: 10,
            seeds: vec![0, 1, 2, 3, 4],
            split: SplitMode::InvertedKfold,
            per_class: 5,
            strategies: vec!["vote".into(), "equiprobable".into(), "weighted".into()],
            vote_threshold: rfmlp::decision::DEFAULT_VOTE_THRESHOLD,
            include_baseline_mlp: true,
            whiten: false,
            curve_fold: 0,
            threads: 0,
            output_dir: PathBuf::from("results"),
            train: TrainSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|source| BenchError::ConfigFile {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn delimiter_byte(&self) -> Result<u8> {
        parse_delimiter(&self.delimiter)
    }

    /// Validates the configuration and derives the settings a run uses.
    pub fn resolve(&self) -> Result<ResolvedRun> {
        if self.k_folds < 2 {
            return Err(BenchError::Config(format!(
                "k_folds must be at least 2, got {}",
                self.k_folds
            )));
        }
        if self.seeds.is_empty() {
            return Err(BenchError::Config("seeds must not be empty".into()));
        }
        if self.split == SplitMode::PerClass && self.per_class == 0 {
            return Err(BenchError::Config("per_class must be at least 1".into()));
        }
        let mut strategies = Vec::new();
        for name in &self.strategies {
            let s = match name.parse::<DecisionStrategy>()? {
                DecisionStrategy::MajorityVote { .. } => DecisionStrategy::MajorityVote {
                    threshold: self.vote_threshold,
                },
                other => other,
            };
            s.validate()?;
            if !strategies.contains(&s) {
                strategies.push(s);
            }
        }
        if strategies.is_empty() && !self.include_baseline_mlp {
            return Err(BenchError::Config(
                "nothing to evaluate: no strategies and the baseline is disabled".into(),
            ));
        }
        let train = self.train.to_train_config();
        train.validate()?;

        let wants_weighted = strategies.contains(&DecisionStrategy::WeightedProbability);
        let mut notices = Vec::new();
        let whiten = if wants_weighted && !self.whiten {
            notices.push(
                "the weighted strategy needs a whitened forest; whitening enabled".to_string(),
            );
            true
        } else {
            self.whiten
        };
        Ok(ResolvedRun {
            delimiter: self.delimiter_byte()?,
            strategies,
            whiten,
            train,
            notices,
        })
    }
}

/// Settings derived from a validated [`RunConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedRun {
    pub delimiter: u8,
    pub strategies: Vec<DecisionStrategy>,
    /// Train a whitened forest.
    pub whiten: bool,
    pub train: TrainConfig,
    /// Adjustments made to the requested configuration.
    pub notices: Vec<String>,
}

impl ResolvedRun {
    /// Vote and equiprobable run on a raw-feature forest, unless whitening
    /// was requested without the weighted strategy.
    pub fn needs_raw_forest(&self) -> bool {
        let weighted = DecisionStrategy::WeightedProbability;
        let wants_weighted = self.strategies.contains(&weighted);
        let wants_unweighted = self.strategies.iter().any(|s| *s != weighted);
        wants_unweighted && (wants_weighted || !self.whiten)
    }

    /// Whether `strategy` is evaluated on the whitened forest.
    pub fn uses_whitened(&self, strategy: DecisionStrategy) -> bool {
        strategy == DecisionStrategy::WeightedProbability || !self.needs_raw_forest()
    }
}

pub fn parse_delimiter(s: &str) -> Result<u8> {
    match s {
        "\\t" | "\t" | "tab" => Ok(b'\t'),
        _ if s.len() == 1 && s.is_ascii() => Ok(s.as_bytes()[0]),
        _ => Err(BenchError::Config(format!(
            "delimiter must be a single ASCII character, got {s:?}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let r = RunConfig::default().resolve().unwrap();
        assert!(r.whiten);
        assert_eq!(r.strategies.len(), 3);
        assert_eq!(r.notices.len(), 1);
        assert!(r.needs_raw_forest());
        assert!(!r.uses_whitened(DecisionStrategy::Equiprobable));
        assert!(r.uses_whitened(DecisionStrategy::WeightedProbability));
    }

    #[test]
    fn weighted_forces_whitening_with_notice() {
        let cfg = RunConfig {
            strategies: vec!["weighted".into()],
            ..Default::default()
        };
        let r = cfg.resolve().unwrap();
        assert!(r.whiten);
        assert!(r.notices[0].contains("whitening enabled"));
        assert!(!r.needs_raw_forest());
    }

    #[test]
    fn whiten_without_weighted_uses_whitened_forest() {
        let cfg = RunConfig {
            strategies: vec!["vote".into()],
            whiten: true,
            ..Default::default()
        };
        let r = cfg.resolve().unwrap();
        assert!(r.notices.is_empty());
        assert!(!r.needs_raw_forest());
        assert!(r.uses_whitened(DecisionStrategy::vote()));
    }

    #[test]
    fn parses_toml_with_overrides_of_defaults() {
        let text = r#"
            data = "x.tsv"
            delimiter = "\t"
            seeds = [7]
            split = "per_class"
            strategies = ["equiprobable"]

            [train]
            epochs = 3
            batch_size = 8
        "#;
        let cfg = RunConfig::from_toml(text, Path::new("c.toml")).unwrap();
        assert_eq!(cfg.delimiter_byte().unwrap(), b'\t');
        assert_eq!(cfg.split, SplitMode::PerClass);
        assert_eq!(cfg.k_folds, 10);
        let r = cfg.resolve().unwrap();
        assert_eq!(r.train.epochs, 3);
        assert_eq!(r.train.batch_size, Some(8));
        assert_eq!(r.train.batches_per_epoch, 200);
        assert!(!r.whiten);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = |cfg: RunConfig| cfg.resolve().is_err();
        assert!(bad(RunConfig { k_folds: 1, ..Default::default() }));
        assert!(bad(RunConfig { seeds: vec![], ..Default::default() }));
        assert!(bad(RunConfig { strategies: vec!["median".into()], ..Default::default() }));
        assert!(bad(RunConfig { vote_threshold: 1.5, ..Default::default() }));
        assert!(bad(RunConfig { delimiter: ";;".into(), ..Default::default() }));
        assert!(RunConfig::from_toml("unknown_key = 1", Path::new("c.toml")).is_err());
    }
}
