//! Per-epoch accuracy curves for one fold of every seed.
//!
//! Each `curves_seed<seed>.csv` has the columns `epoch,split,method,accuracy`.
//! `split` is `train` (the whole training fold), `holdout` (the early-stopping
//! holdout of a single network) or `validation`. `method` is `mlp`,
//! `member<j>` (with a `_whitened` suffix for the whitened forest) or one of
//! the ensemble method names.
//!
//! An ensemble at epoch `e` combines every member's parameters after epoch
//! `e`; a member that already stopped contributes its returned weights.

use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use rfmlp::decision::predict_batch;
use rfmlp::forest::ForestTraining;
use rfmlp::mlp::train_mlp_observed;
use rfmlp::{data, Dataset, DecisionStrategy, FoldSplit, Matrix};

use crate::bench::{load_dataset, splits_for_seed, with_pool, CellForests, CellSeeds, Method};
use crate::config::{ResolvedRun, RunConfig};
use crate::error::{BenchError, Result};
use crate::report::{write_csv, CsvTable};

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    /// 1-indexed.
    pub epoch: usize,
    pub split: &'static str,
    pub method: String,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedCurves {
    pub seed: u64,
    pub fold: usize,
    pub rows: Vec<CurveRow>,
}

impl SeedCurves {
    /// Rows of one series in epoch order.
    pub fn series(&self, method: &str, split: &str) -> Vec<&CurveRow> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.split == split)
            .collect()
    }

    /// Train minus validation accuracy at the last recorded epoch.
    pub fn final_gap(&self, method: &str) -> Option<f64> {
        let train = self.series(method, "train").last()?.accuracy;
        let validation = self.series(method, "validation").last()?.accuracy;
        Some(train - validation)
    }

    pub fn table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["epoch", "split", "method", "accuracy"]);
        for r in &self.rows {
            t.push(vec![
                r.epoch.to_string(),
                r.split.to_string(),
                r.method.clone(),
                r.accuracy.to_string(),
            ]);
        }
        t
    }
}

fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len() as f64
}

struct Fold<'a> {
    split: &'a FoldSplit,
    train: (Matrix, Vec<usize>),
    validation: (Matrix, Vec<usize>),
}

fn baseline_rows(ds: &Dataset, fold: &Fold, resolved: &ResolvedRun, seed: u64) -> rfmlp::Result<Vec<CurveRow>> {
    let standardizer = data::fit_standardizer(ds, &fold.split.train_indices)?;
    let train_x = standardizer.apply(&fold.train.0)?;
    let val_x = standardizer.apply(&fold.validation.0)?;
    let mut snapshots = Vec::new();
    let (_, history) = train_mlp_observed(
        &train_x,
        &fold.train.1,
        ds.class_count(),
        &resolved.train,
        seed,
        |_, m| snapshots.push(m.clone()),
    )?;
    let mut rows = Vec::new();
    for (e, model) in snapshots.iter().enumerate() {
        let epoch = e + 1;
        let mut push = |split, accuracy| {
            rows.push(CurveRow {
                epoch,
                split,
                method: Method::BaselineMlp.name().into(),
                accuracy,
            })
        };
        push("train", model.accuracy(&train_x, &fold.train.1)?);
        if let Some(h) = history.holdout_accuracy[e] {
            push("holdout", h);
        }
        push("validation", model.accuracy(&val_x, &fold.validation.1)?);
    }
    Ok(rows)
}

fn member_rows(trained: &ForestTraining, suffix: &str) -> Vec<CurveRow> {
    let mut rows = Vec::new();
    for (j, h) in trained.histories.iter().enumerate() {
        let method = format!("member{j}{suffix}");
        for e in 0..h.epochs() {
            rows.push(CurveRow {
                epoch: e + 1,
                split: "train",
                method: method.clone(),
                accuracy: h.train_accuracy[e],
            });
            if let Some(acc) = h.holdout_accuracy[e] {
                rows.push(CurveRow {
                    epoch: e + 1,
                    split: "holdout",
                    method: method.clone(),
                    accuracy: acc,
                });
            }
        }
    }
    rows
}

fn ensemble_rows(
    trained: &ForestTraining,
    strategy: DecisionStrategy,
    fold: &Fold,
) -> rfmlp::Result<Vec<CurveRow>> {
    let snapshots = trained
        .snapshots
        .as_ref()
        .expect("forest trained with snapshots");
    let epochs = snapshots.iter().map(Vec::len).max().unwrap_or(0);
    let method = Method::from_strategy(strategy).name();
    let mut forest = trained.model.clone();
    let mut rows = Vec::new();
    for epoch in 1..=epochs {
        forest.members = snapshots
            .iter()
            .zip(&trained.model.members)
            .map(|(snaps, last)| snaps.get(epoch - 1).unwrap_or(last).clone())
            .collect();
        for (split, (x, y)) in [("train", &fold.train), ("validation", &fold.validation)] {
            let pred: Vec<usize> = predict_batch(&forest, x, strategy)?
                .iter()
                .map(|d| d.label)
                .collect();
            rows.push(CurveRow {
                epoch,
                split,
                method: method.into(),
                accuracy: accuracy(&pred, y),
            });
        }
    }
    Ok(rows)
}

fn seed_curves(ds: &Dataset, cfg: &RunConfig, resolved: &ResolvedRun, seed: u64) -> Result<SeedCurves> {
    let splits = splits_for_seed(cfg, ds, seed)?;
    let split = splits.get(cfg.curve_fold).ok_or_else(|| {
        BenchError::Config(format!(
            "curve_fold {} out of range for {} folds",
            cfg.curve_fold,
            splits.len()
        ))
    })?;
    let fold_id = split.fold_id;
    let ctx = |method: &str| {
        let method = method.to_string();
        move |source| BenchError::Cell {
            seed,
            fold: fold_id,
            method,
            source,
        }
    };
    let fold = Fold {
        split,
        train: ds.subset(&split.train_indices),
        validation: ds.subset(&split.validation_indices),
    };
    let seeds = CellSeeds::new(seed, fold_id);
    let mut rows = Vec::new();
    if cfg.include_baseline_mlp {
        rows.extend(baseline_rows(ds, &fold, resolved, seeds.baseline).map_err(ctx("mlp"))?);
    }
    let forests = CellForests::train(ds, &split.train_indices, resolved, &seeds, true)
        .map_err(ctx("forest"))?;
    for (suffix, slot) in [("", &forests.raw), ("_whitened", &forests.whitened)] {
        if let Some(trained) = slot {
            rows.extend(member_rows(trained, suffix));
        }
    }
    for &strategy in &resolved.strategies {
        let trained = forests.for_strategy(resolved, strategy);
        let method = Method::from_strategy(strategy).name();
        rows.extend(ensemble_rows(trained, strategy, &fold).map_err(ctx(method))?);
    }
    Ok(SeedCurves {
        seed,
        fold: fold_id,
        rows,
    })
}

/// Computes the curves of every configured seed without writing files.
pub fn run_curves(cfg: &RunConfig) -> Result<Vec<SeedCurves>> {
    let resolved = cfg.resolve()?;
    for notice in &resolved.notices {
        info!("{notice}");
    }
    let ds = load_dataset(cfg, &resolved)?;
    with_pool(cfg.threads, || {
        cfg.seeds
            .par_iter()
            .map(|&s| seed_curves(&ds, cfg, &resolved, s))
            .collect::<Result<Vec<_>>>()
    })?
}

pub fn curves_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("curves_seed{seed}.csv"))
}

/// Computes the curves and writes one CSV per seed into the output directory.
pub fn cmd_curves(cfg: &RunConfig) -> Result<Vec<SeedCurves>> {
    let curves = run_curves(cfg)?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    for c in &curves {
        write_csv(&curves_path(dir, c.seed), &c.table())?;
    }
    Ok(curves)
}
