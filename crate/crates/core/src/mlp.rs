//! Single-hidden-layer softmax MLP, Adam, and the training loop used for
//! every ensemble member and for the single-network baseline.
//!
//! Layout: `w1` is `d_in × hidden`, `w2` is `hidden × classes`, both
//! row-major, so a sample `x` (a row vector) maps to
//! `softmax(relu(x·w1 + b1)·w2 + b2)`.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{argmax, Matrix};
use crate::seed;

pub const DEFAULT_HIDDEN: usize = 100;

/// Network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

/// Gradient buffers, shaped like [`MlpModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl Gradients {
    pub fn buffers(&self) -> [&[f64]; 4] {
        [self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2]
    }
}

/// He-initialized network: weights `~ N(0, 2 / fan_in)`, biases zero.
pub fn init_mlp(d_in: usize, hidden: usize, classes: usize, seed: u64) -> Result<MlpModel> {
    MlpModel::new(d_in, hidden, classes, seed)
}

impl MlpModel {
    pub fn new(d_in: usize, hidden: usize, classes: usize, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(d_in, hidden, classes)?;
        let mut rng = seed::rng(seed);
        let s1 = (2.0 / d_in as f64).sqrt();
        for w in model.w1.as_mut_slice() {
            *w = s1 * rng.sample::<f64, _>(StandardNormal);
        }
        let s2 = (2.0 / hidden as f64).sqrt();
        for w in model.w2.as_mut_slice() {
            *w = s2 * rng.sample::<f64, _>(StandardNormal);
        }
        Ok(model)
    }

    /// All parameters zero; every input maps to the uniform distribution.
    pub fn zeros(d_in: usize, hidden: usize, classes: usize) -> Result<Self> {
        if d_in == 0 || hidden == 0 {
            return Err(Error::arg("input and hidden sizes must be at least 1"));
        }
        if classes < 2 {
            return Err(Error::arg(format!(
                "need at least two classes, got {classes}"
            )));
        }
        Ok(Self {
            w1: Matrix::zeros(d_in, hidden),
            b1: vec![0.0; hidden],
            w2: Matrix::zeros(hidden, classes),
            b2: vec![0.0; classes],
        })
    }

    /// Assembles a model from explicit parameters, checking shapes.
    pub fn from_parts(w1: Matrix, b1: Vec<f64>, w2: Matrix, b2: Vec<f64>) -> Result<Self> {
        let hidden = w1.cols();
        let check = |context, expected, found| {
            if expected == found {
                Ok(())
            } else {
                Err(Error::Dimension {
                    context,
                    expected,
                    found,
                })
            }
        };
        check("b1 length", hidden, b1.len())?;
        check("w2 rows", hidden, w2.rows())?;
        check("b2 length", w2.cols(), b2.len())?;
        if w1.rows() == 0 || hidden == 0 || w2.cols() < 2 {
            return Err(Error::arg("degenerate network shape"));
        }
        if !b1.iter().chain(&b2).all(|v| v.is_finite()) {
            return Err(Error::arg("non-finite bias"));
        }
        Ok(Self { w1, b1, w2, b2 })
    }

    pub fn d_in(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.cols()
    }

    pub fn classes(&self) -> usize {
        self.w2.cols()
    }

    pub fn param_count(&self) -> usize {
        self.buffers().iter().map(|b| b.len()).sum()
    }

    pub fn buffers(&self) -> [&[f64]; 4] {
        [self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2]
    }

    pub fn buffers_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.w2.as_mut_slice(),
            &mut self.b2,
        ]
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.d_in() {
            return Err(Error::Dimension {
                context: "network input",
                expected: self.d_in(),
                found: len,
            });
        }
        Ok(())
    }

    /// Writes hidden pre-activations and logits for one sample.
    fn forward_into(&self, x: &[f64], pre: &mut [f64], logits: &mut [f64]) {
        pre.copy_from_slice(&self.b1);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (p, w) in pre.iter_mut().zip(self.w1.row(i)) {
                *p += xi * w;
            }
        }
        logits.copy_from_slice(&self.b2);
        for (j, &pj) in pre.iter().enumerate() {
            if pj <= 0.0 {
                continue;
            }
            for (z, w) in logits.iter_mut().zip(self.w2.row(j)) {
                *z += pj * w;
            }
        }
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x.len())?;
        let mut pre = vec![0.0; self.hidden()];
        let mut logits = vec![0.0; self.classes()];
        self.forward_into(x, &mut pre, &mut logits);
        Ok(logits)
    }

    /// Class probabilities for one sample.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.logits(x)?;
        softmax_in_place(&mut z);
        Ok(z)
    }

    /// Row-wise class probabilities.
    pub fn predict_proba(&self, xs: &Matrix) -> Result<Matrix> {
        self.check_input(xs.cols())?;
        let mut out = Matrix::zeros(xs.rows(), self.classes());
        let mut pre = vec![0.0; self.hidden()];
        for r in 0..xs.rows() {
            let z = out.row_mut(r);
            self.forward_into(xs.row(r), &mut pre, z);
            softmax_in_place(z);
        }
        Ok(out)
    }

    pub fn predict(&self, xs: &Matrix) -> Result<Vec<usize>> {
        let p = self.predict_proba(xs)?;
        Ok(p.row_iter().map(argmax).collect())
    }

    /// Fraction of rows whose argmax matches the label; 0 for no rows.
    pub fn accuracy(&self, xs: &Matrix, ys: &[usize]) -> Result<f64> {
        if ys.is_empty() {
            return Ok(0.0);
        }
        let pred = self.predict(xs)?;
        let hits = pred.iter().zip(ys).filter(|(p, y)| p == y).count();
        Ok(hits as f64 / ys.len() as f64)
    }

    /// Mean categorical cross-entropy over the rows of `xs` and its exact
    /// gradient.
    pub fn loss_and_grads(&self, xs: &Matrix, ys: &[usize]) -> Result<(f64, Gradients)> {
        self.check_input(xs.cols())?;
        if xs.rows() == 0 {
            return Err(Error::arg("empty batch"));
        }
        if ys.len() != xs.rows() {
            return Err(Error::Dimension {
                context: "batch labels",
                expected: xs.rows(),
                found: ys.len(),
            });
        }
        let (d_in, hidden, classes) = (self.d_in(), self.hidden(), self.classes());
        if let Some(&bad) = ys.iter().find(|&&y| y >= classes) {
            return Err(Error::arg(format!("label {bad} out of range")));
        }
        let mut g = Gradients {
            w1: Matrix::zeros(d_in, hidden),
            b1: vec![0.0; hidden],
            w2: Matrix::zeros(hidden, classes),
            b2: vec![0.0; classes],
        };
        let mut pre = vec![0.0; hidden];
        let mut z = vec![0.0; classes];
        let mut dh = vec![0.0; hidden];
        let mut loss = 0.0;

        for (x, &y) in xs.row_iter().zip(ys) {
            self.forward_into(x, &mut pre, &mut z);
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
            loss += max + sum.ln() - z[y];
            // z becomes dL/dz = softmax(z) - onehot(y)
            for v in z.iter_mut() {
                *v = (*v - max).exp() / sum;
            }
            z[y] -= 1.0;

            for (gb, dz) in g.b2.iter_mut().zip(&z) {
                *gb += dz;
            }
            for j in 0..hidden {
                if pre[j] <= 0.0 {
                    dh[j] = 0.0;
                    continue;
                }
                let w_row = self.w2.row(j);
                let mut acc = 0.0;
                for ((gw, dz), w) in g.w2.row_mut(j).iter_mut().zip(&z).zip(w_row) {
                    *gw += pre[j] * dz;
                    acc += w * dz;
                }
                dh[j] = acc;
            }
            for (gb, d) in g.b1.iter_mut().zip(&dh) {
                *gb += d;
            }
            for (i, &xi) in x.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                for (gw, d) in g.w1.row_mut(i).iter_mut().zip(&dh) {
                    *gw += xi * d;
                }
            }
        }

        let scale = 1.0 / xs.rows() as f64;
        g.w1.as_mut_slice().iter_mut().for_each(|v| *v *= scale);
        g.b1.iter_mut().for_each(|v| *v *= scale);
        g.w2.as_mut_slice().iter_mut().for_each(|v| *v *= scale);
        g.b2.iter_mut().for_each(|v| *v *= scale);
        Ok((loss * scale, g))
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Adam optimizer state for a fixed list of parameter buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Zeroed moments for buffers of the given lengths.
    pub fn new(sizes: &[usize]) -> Self {
        Self {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn for_model(model: &MlpModel) -> Self {
        Self::new(&model.buffers().map(<[f64]>::len))
    }

    /// One bias-corrected Adam update of every buffer.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension {
                context: "optimizer buffer count",
                expected: self.m.len(),
                found: params.len().max(grads.len()),
            });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::Dimension {
                    context: "optimizer buffer length",
                    expected: m.len(),
                    found: if p.len() != m.len() { p.len() } else { g.len() },
                });
            }
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            for (((pi, &gi), mi), vi) in p.iter_mut().zip(*g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *pi -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Applies one Adam step to a model.
pub fn adam_step(
    state: &mut AdamState,
    model: &mut MlpModel,
    grads: &Gradients,
    lr: f64,
) -> Result<()> {
    let mut params = model.buffers_mut();
    state.step(&mut params, &grads.buffers(), lr)
}

/// Training hyperparameters. Defaults follow the reference setup: 100 hidden
/// units, 100 epochs of 200 mini-batches, learning rate 1e-3 dropping to 1e-4
/// after epoch 50, early stopping with patience 10 on a 20% holdout.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    /// `None` means `min(32, training rows)`.
    pub batch_size: Option<usize>,
    pub lr_initial: f64,
    pub lr_after_drop: f64,
    pub lr_drop_epoch: usize,
    pub early_stop_patience: usize,
    pub holdout_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HIDDEN,
            epochs: 100,
            batches_per_epoch: 200,
            batch_size: None,
            lr_initial: 1e-3,
            lr_after_drop: 1e-4,
            lr_drop_epoch: 50,
            early_stop_patience: 10,
            holdout_fraction: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("hidden", self.hidden),
            ("epochs", self.epochs),
            ("batches_per_epoch", self.batches_per_epoch),
            ("lr_drop_epoch", self.lr_drop_epoch),
            ("early_stop_patience", self.early_stop_patience),
            ("batch_size", self.batch_size.unwrap_or(1)),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config(format!(
                "holdout_fraction must be in [0, 1), got {}",
                self.holdout_fraction
            )));
        }
        for (name, lr) in [
            ("lr_initial", self.lr_initial),
            ("lr_after_drop", self.lr_after_drop),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {lr}")));
            }
        }
        Ok(())
    }
}

/// Learning rate for a 1-indexed epoch; the drop applies strictly after
/// `lr_drop_epoch`.
pub fn lr_schedule(cfg: &TrainConfig, epoch: usize) -> f64 {
    if epoch <= cfg.lr_drop_epoch {
        cfg.lr_initial
    } else {
        cfg.lr_after_drop
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    /// Accuracy on the rows used for gradient steps.
    pub train_accuracy: Vec<f64>,
    /// Accuracy on the early-stopping holdout; `None` when early stopping is
    /// disabled.
    pub holdout_accuracy: Vec<Option<f64>>,
    pub mean_loss: Vec<f64>,
    /// 1-indexed epoch whose parameters were returned.
    pub best_epoch: usize,
    pub early_stopping: bool,
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.train_accuracy.len()
    }
}

/// Stratified holdout carved out of the training rows, or `None` when some
/// present class cannot keep a sample on both sides.
fn split_holdout(
    ys: &[usize],
    classes: usize,
    fraction: f64,
    rng: &mut impl Rng,
) -> Option<(Vec<usize>, Vec<usize>)> {
    if fraction <= 0.0 {
        return None;
    }
    let mut fit = Vec::new();
    let mut holdout = Vec::new();
    for class in 0..classes {
        let mut members: Vec<usize> = (0..ys.len()).filter(|&i| ys[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        let n_hold = ((fraction * members.len() as f64).round() as usize).max(1);
        if n_hold >= members.len() {
            return None;
        }
        members.shuffle(rng);
        holdout.extend_from_slice(&members[..n_hold]);
        fit.extend_from_slice(&members[n_hold..]);
    }
    fit.sort_unstable();
    holdout.sort_unstable();
    Some((fit, holdout))
}

/// Trains a fresh network on `(xs, ys)`.
pub fn train_mlp(
    xs: &Matrix,
    ys: &[usize],
    classes: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(MlpModel, TrainHistory)> {
    train_mlp_observed(xs, ys, classes, cfg, seed, |_, _| {})
}

/// [`train_mlp`] that also hands the parameters after every completed epoch
/// to `on_epoch` (1-indexed).
///
/// Each epoch draws `batches_per_epoch` batches with replacement from the
/// fitting rows. When the rows allow a stratified holdout, training stops
/// once holdout accuracy has not improved for `early_stop_patience` epochs
/// and the best-epoch parameters are returned; otherwise all epochs run and
/// the final parameters are returned.
pub fn train_mlp_observed(
    xs: &Matrix,
    ys: &[usize],
    classes: usize,
    cfg: &TrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(usize, &MlpModel),
) -> Result<(MlpModel, TrainHistory)> {
    cfg.validate()?;
    if xs.rows() == 0 {
        return Err(Error::arg("empty training set"));
    }
    if ys.len() != xs.rows() {
        return Err(Error::Dimension {
            context: "training labels",
            expected: xs.rows(),
            found: ys.len(),
        });
    }
    let mut model = MlpModel::new(xs.cols(), cfg.hidden, classes, seed::derive(seed, 0))?;
    let mut rng = seed::rng(seed::derive(seed, 1));

    let split = split_holdout(ys, classes, cfg.holdout_fraction, &mut rng);
    let early_stopping = split.is_some();
    let (fit_idx, hold_idx) = split.unwrap_or_else(|| ((0..ys.len()).collect(), Vec::new()));
    let fit_x = xs.select_rows(&fit_idx);
    let fit_y: Vec<usize> = fit_idx.iter().map(|&i| ys[i]).collect();
    let hold_x = xs.select_rows(&hold_idx);
    let hold_y: Vec<usize> = hold_idx.iter().map(|&i| ys[i]).collect();

    let batch_size = cfg.batch_size.unwrap_or(32).min(fit_idx.len());
    let mut adam = AdamState::for_model(&model);
    let mut batch_x = Matrix::zeros(batch_size, xs.cols());
    let mut batch_y = vec![0usize; batch_size];

    let mut history = TrainHistory {
        train_accuracy: Vec::new(),
        holdout_accuracy: Vec::new(),
        mean_loss: Vec::new(),
        best_epoch: 0,
        early_stopping,
    };
    let mut best: Option<(f64, MlpModel)> = None;
    let mut since_best = 0;

    for epoch in 1..=cfg.epochs {
        let lr = lr_schedule(cfg, epoch);
        let mut loss_sum = 0.0;
        for _ in 0..cfg.batches_per_epoch {
            for (b, y) in batch_y.iter_mut().enumerate() {
                let i = rng.random_range(0..fit_idx.len());
                batch_x.row_mut(b).copy_from_slice(fit_x.row(i));
                *y = fit_y[i];
            }
            let (loss, grads) = model.loss_and_grads(&batch_x, &batch_y)?;
            adam_step(&mut adam, &mut model, &grads, lr)?;
            loss_sum += loss;
        }
        history.mean_loss.push(loss_sum / cfg.batches_per_epoch as f64);
        history.train_accuracy.push(model.accuracy(&fit_x, &fit_y)?);
        on_epoch(epoch, &model);

        if !early_stopping {
            history.holdout_accuracy.push(None);
            history.best_epoch = epoch;
            continue;
        }
        let acc = model.accuracy(&hold_x, &hold_y)?;
        history.holdout_accuracy.push(Some(acc));
        if best.as_ref().is_none_or(|(b, _)| acc > *b) {
            best = Some((acc, model.clone()));
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                break;
            }
        }
    }

    let model = match best {
        Some((_, m)) => m,
        None => model,
    };
    Ok((model, history))
}
