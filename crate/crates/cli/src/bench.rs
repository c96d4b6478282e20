//! Inverted cross-validation benchmark: for every seed and fold, train the
//! single-MLP baseline and the forest(s) on one fold and score every method
//! on the remaining folds.

use std::fmt::Write as _;
use std::path::Path;

use log::info;
use rayon::prelude::*;
use rfmlp::data::{self, CurseReport};
use rfmlp::decision::predict_batch;
use rfmlp::forest::{train_forest_detailed, ForestTraining};
use rfmlp::mlp::train_mlp;
use rfmlp::{
    seed, Dataset, DecisionStrategy, EvalReport, FoldSplit, Matrix, MlpModel,
    Standardizer, TrainConfig, TrainHistory,
};

use crate::config::{ResolvedRun, RunConfig, SplitMode};
use crate::error::{BenchError, Result};
use crate::report::{write_csv, CsvTable};

/// An evaluated classifier: the baseline or one fusion strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    BaselineMlp,
    Vote,
    Equiprobable,
    Weighted,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::BaselineMlp => "mlp",
            Method::Vote => "rfmlp_vote",
            Method::Equiprobable => "rfmlp_equiprobable",
            Method::Weighted => "rfmlp_weighted",
        }
    }

    pub fn from_strategy(s: DecisionStrategy) -> Self {
        match s {
            DecisionStrategy::MajorityVote { .. } => Method::Vote,
            DecisionStrategy::Equiprobable => Method::Equiprobable,
            DecisionStrategy::WeightedProbability => Method::Weighted,
        }
    }

    pub fn is_forest(self) -> bool {
        self != Method::BaselineMlp
    }
}

/// Scores of one method on one (seed, fold) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellReport {
    pub method: Method,
    pub seed: u64,
    pub fold: usize,
    pub train_size: usize,
    pub validation_size: usize,
    pub report: EvalReport,
    /// Fraction of samples where voting fell back to averaging.
    pub fallback_rate: Option<f64>,
}

/// Per-epoch record of one trained network.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurve {
    pub seed: u64,
    pub fold: usize,
    /// `mlp`, `member<j>` or `member<j>_whitened`.
    pub network: String,
    pub history: TrainHistory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub cells: usize,
    pub mean_f1: f64,
    pub median_f1: f64,
    pub std_f1: f64,
    pub min_f1: f64,
    pub max_f1: f64,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetInfo {
    pub samples: usize,
    pub features: usize,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkResult {
    pub dataset: DatasetInfo,
    /// Number of folds used in the curse condition.
    pub k: usize,
    pub curse: CurseReport,
    pub notices: Vec<String>,
    /// Ordered by seed, fold, then method.
    pub cells: Vec<CellReport>,
    pub summaries: Vec<MethodSummary>,
    pub learning_curves: Vec<LearningCurve>,
}

/// Baseline: one network on all (standardized) features.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineMlp {
    pub standardizer: Standardizer,
    pub model: MlpModel,
}

impl BaselineMlp {
    pub fn predict(&self, x: &Matrix) -> rfmlp::Result<Vec<usize>> {
        self.model.predict(&self.standardizer.apply(x)?)
    }
}

pub fn train_baseline(
    ds: &Dataset,
    rows: &[usize],
    cfg: &TrainConfig,
    seed: u64,
) -> rfmlp::Result<(BaselineMlp, TrainHistory)> {
    let standardizer = data::fit_standardizer(ds, rows)?;
    let (x, y) = ds.subset(rows);
    let x = standardizer.apply(&x)?;
    let (model, history) = train_mlp(&x, &y, ds.class_count(), cfg, seed)?;
    Ok((BaselineMlp { standardizer, model }, history))
}

/// Seeds of the networks trained in one cell.
pub(crate) struct CellSeeds {
    pub baseline: u64,
    pub raw_forest: u64,
    pub whitened_forest: u64,
}

impl CellSeeds {
    pub fn new(seed: u64, fold: usize) -> Self {
        let cell = seed::derive(seed, fold as u64);
        Self {
            baseline: seed::derive(cell, 0),
            raw_forest: seed::derive(cell, 1),
            whitened_forest: seed::derive(cell, 2),
        }
    }
}

pub fn load_dataset(cfg: &RunConfig, resolved: &ResolvedRun) -> Result<Dataset> {
    Ok(data::load_csv(&cfg.data, &cfg.label_column, resolved.delimiter)?)
}

pub(crate) fn splits_for_seed(cfg: &RunConfig, ds: &Dataset, seed: u64) -> Result<Vec<FoldSplit>> {
    Ok(match cfg.split {
        SplitMode::InvertedKfold => data::inverted_stratified_kfold(ds, cfg.k_folds, seed)?,
        SplitMode::PerClass => data::per_class_splits(ds, cfg.per_class, cfg.k_folds, seed)?,
    })
}

/// Number of folds the training share corresponds to, for the curse report.
fn effective_k(cfg: &RunConfig, ds: &Dataset) -> usize {
    match cfg.split {
        SplitMode::InvertedKfold => cfg.k_folds,
        SplitMode::PerClass => {
            let train = cfg.per_class * ds.class_count();
            ds.len().div_ceil(train).max(1)
        }
    }
}

pub(crate) fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| BenchError::Config(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Trained forests of one cell.
pub(crate) struct CellForests {
    pub raw: Option<ForestTraining>,
    pub whitened: Option<ForestTraining>,
}

impl CellForests {
    pub fn train(
        ds: &Dataset,
        rows: &[usize],
        resolved: &ResolvedRun,
        seeds: &CellSeeds,
        keep_snapshots: bool,
    ) -> rfmlp::Result<Self> {
        let wants_forest = !resolved.strategies.is_empty();
        let train = |whiten: bool, s: u64| {
            train_forest_detailed(ds, rows, &resolved.train, whiten, s, keep_snapshots)
        };
        let raw = if wants_forest && resolved.needs_raw_forest() {
            Some(train(false, seeds.raw_forest)?)
        } else {
            None
        };
        let whitened = if wants_forest && resolved.whiten {
            Some(train(true, seeds.whitened_forest)?)
        } else {
            None
        };
        Ok(Self { raw, whitened })
    }

    pub fn for_strategy(
        &self,
        resolved: &ResolvedRun,
        s: DecisionStrategy,
    ) -> &ForestTraining {
        let slot = if resolved.uses_whitened(s) {
            &self.whitened
        } else {
            &self.raw
        };
        slot.as_ref().expect("forest trained for every requested strategy")
    }
}

struct CellOutcome {
    reports: Vec<CellReport>,
    curves: Vec<LearningCurve>,
}

fn run_cell(
    ds: &Dataset,
    cfg: &RunConfig,
    resolved: &ResolvedRun,
    seed: u64,
    split: &FoldSplit,
) -> Result<CellOutcome> {
    let fold = split.fold_id;
    let ctx = |method: &str| {
        let method = method.to_string();
        move |source| BenchError::Cell {
            seed,
            fold,
            method,
            source,
        }
    };
    let seeds = CellSeeds::new(seed, fold);
    let (val_x, val_y) = ds.subset(&split.validation_indices);
    let mut reports = Vec::new();
    let mut curves = Vec::new();
    let cell = |method, report, fallback_rate| CellReport {
        method,
        seed,
        fold,
        train_size: split.train_indices.len(),
        validation_size: split.validation_indices.len(),
        report,
        fallback_rate,
    };

    if cfg.include_baseline_mlp {
        let (baseline, history) =
            train_baseline(ds, &split.train_indices, &resolved.train, seeds.baseline)
                .map_err(ctx("mlp"))?;
        let pred = baseline.predict(&val_x).map_err(ctx("mlp"))?;
        let report = EvalReport::from_predictions(&val_y, &pred, ds.class_count())
            .map_err(ctx("mlp"))?;
        reports.push(cell(Method::BaselineMlp, report, None));
        curves.push(LearningCurve {
            seed,
            fold,
            network: "mlp".into(),
            history,
        });
    }

    let forests = CellForests::train(ds, &split.train_indices, resolved, &seeds, false)
        .map_err(ctx("forest"))?;
    for (suffix, slot) in [("", &forests.raw), ("_whitened", &forests.whitened)] {
        if let Some(trained) = slot {
            for (j, h) in trained.histories.iter().enumerate() {
                curves.push(LearningCurve {
                    seed,
                    fold,
                    network: format!("member{j}{suffix}"),
                    history: h.clone(),
                });
            }
        }
    }
    for &strategy in &resolved.strategies {
        let method = Method::from_strategy(strategy);
        let forest = &forests.for_strategy(resolved, strategy).model;
        let decisions = predict_batch(forest, &val_x, strategy).map_err(ctx(method.name()))?;
        let pred: Vec<usize> = decisions.iter().map(|d| d.label).collect();
        let report = EvalReport::from_predictions(&val_y, &pred, ds.class_count())
            .map_err(ctx(method.name()))?;
        let fallback_rate = matches!(strategy, DecisionStrategy::MajorityVote { .. }).then(|| {
            decisions.iter().filter(|d| d.fallback_used).count() as f64 / decisions.len() as f64
        });
        reports.push(cell(method, report, fallback_rate));
    }
    Ok(CellOutcome { reports, curves })
}

/// Mean, median, sample standard deviation, min and max.
pub fn describe(values: &[f64]) -> (f64, f64, f64, f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    (mean, median, std, sorted[0], sorted[n - 1])
}

pub fn summarize(cells: &[CellReport]) -> Vec<MethodSummary> {
    let mut methods: Vec<Method> = cells.iter().map(|c| c.method).collect();
    methods.sort_unstable();
    methods.dedup();
    methods
        .into_iter()
        .map(|method| {
            let of_method: Vec<&CellReport> = cells.iter().filter(|c| c.method == method).collect();
            let f1: Vec<f64> = of_method.iter().map(|c| c.report.weighted_f1).collect();
            let (mean_f1, median_f1, std_f1, min_f1, max_f1) = describe(&f1);
            let acc: Vec<f64> = of_method.iter().map(|c| c.report.accuracy).collect();
            MethodSummary {
                method,
                cells: f1.len(),
                mean_f1,
                median_f1,
                std_f1,
                min_f1,
                max_f1,
                mean_accuracy: describe(&acc).0,
            }
        })
        .collect()
}

/// Runs the benchmark without writing any files.
pub fn run_bench(cfg: &RunConfig) -> Result<BenchmarkResult> {
    let resolved = cfg.resolve()?;
    for notice in &resolved.notices {
        info!("{notice}");
    }
    let ds = load_dataset(cfg, &resolved)?;
    let k = effective_k(cfg, &ds);
    let curse = data::curse_condition(ds.class_count(), ds.n_features(), ds.len(), k)?;
    if !curse.satisfied {
        info!(
            "C^N = {} is not below M/K = {}; the protocol is outside the data-starved regime",
            curse.lhs, curse.rhs
        );
    }

    let mut jobs = Vec::new();
    for &s in &cfg.seeds {
        for split in splits_for_seed(cfg, &ds, s)? {
            jobs.push((s, split));
        }
    }
    let outcomes: Vec<CellOutcome> = with_pool(cfg.threads, || {
        jobs.par_iter()
            .map(|(s, split)| run_cell(&ds, cfg, &resolved, *s, split))
            .collect::<Result<Vec<_>>>()
    })??;

    let mut cells = Vec::new();
    let mut learning_curves = Vec::new();
    for o in outcomes {
        cells.extend(o.reports);
        learning_curves.extend(o.curves);
    }
    Ok(BenchmarkResult {
        dataset: DatasetInfo {
            samples: ds.len(),
            features: ds.n_features(),
            classes: ds.class_count(),
        },
        k,
        curse,
        notices: resolved.notices,
        summaries: summarize(&cells),
        cells,
        learning_curves,
    })
}

/// Runs the benchmark and writes `summary.csv`, `summary.txt` and
/// `cells.csv` into the configured output directory.
pub fn cmd_bench(cfg: &RunConfig) -> Result<BenchmarkResult> {
    let result = run_bench(cfg)?;
    write_bench_outputs(&result, &cfg.output_dir)?;
    Ok(result)
}

pub fn cells_table(cells: &[CellReport]) -> CsvTable {
    let mut t = CsvTable::new(&[
        "method",
        "seed",
        "fold",
        "train_size",
        "validation_size",
        "weighted_f1",
        "accuracy",
        "fallback_rate",
    ]);
    for c in cells {
        t.push(vec![
            c.method.name().to_string(),
            c.seed.to_string(),
            c.fold.to_string(),
            c.train_size.to_string(),
            c.validation_size.to_string(),
            c.report.weighted_f1.to_string(),
            c.report.accuracy.to_string(),
            c.fallback_rate.map_or_else(String::new, |r| r.to_string()),
        ]);
    }
    t
}

pub fn summary_table(summaries: &[MethodSummary]) -> CsvTable {
    let mut t = CsvTable::new(&[
        "method",
        "cells",
        "mean_f1",
        "median_f1",
        "std_f1",
        "min_f1",
        "max_f1",
        "mean_accuracy",
    ]);
    for s in summaries {
        t.push(vec![
            s.method.name().to_string(),
            s.cells.to_string(),
            s.mean_f1.to_string(),
            s.median_f1.to_string(),
            s.std_f1.to_string(),
            s.min_f1.to_string(),
            s.max_f1.to_string(),
            s.mean_accuracy.to_string(),
        ]);
    }
    t
}

/// Plain-text rendering of the summary, F1 in percent.
pub fn render_summary(result: &BenchmarkResult) -> String {
    let mut out = String::new();
    let d = &result.dataset;
    let _ = writeln!(
        out,
        "dataset: M={} samples, N={} features, C={} classes; K={}",
        d.samples, d.features, d.classes, result.k
    );
    let c = &result.curse;
    let _ = writeln!(
        out,
        "curse condition C^N < M/K: lhs={} rhs={} satisfied={}",
        c.lhs, c.rhs, c.satisfied
    );
    for n in &result.notices {
        let _ = writeln!(out, "notice: {n}");
    }
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:<20} {:>5} {:>9} {:>9} {:>8} {:>8} {:>8}",
        "method", "cells", "median_f1", "mean_f1", "std_f1", "min_f1", "max_f1"
    );
    for s in &result.summaries {
        let _ = writeln!(
            out,
            "{:<20} {:>5} {:>9.1} {:>9.1} {:>8.1} {:>8.1} {:>8.1}",
            s.method.name(),
            s.cells,
            100.0 * s.median_f1,
            100.0 * s.mean_f1,
            100.0 * s.std_f1,
            100.0 * s.min_f1,
            100.0 * s.max_f1
        );
    }
    out
}

pub fn write_bench_outputs(result: &BenchmarkResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    write_csv(&dir.join("cells.csv"), &cells_table(&result.cells))?;
    write_csv(&dir.join("summary.csv"), &summary_table(&result.summaries))?;
    let txt = dir.join("summary.txt");
    std::fs::write(&txt, render_summary(result)).map_err(|e| BenchError::io(&txt, e))?;
    Ok(())
}
