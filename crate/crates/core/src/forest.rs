//! The MLP forest: one member per left-out feature, optional PCA whitening of
//! the input space, and the classifier priors used by probabilistic fusion.
//!
//! With `N` features the forest has `N` members and member `j` never sees
//! feature `j`. For whitened forests the features are the whitened
//! coordinates, sorted by descending eigenvalue, so member `j` is the one
//! that drops principal direction `j` and its weighted prior is
//! proportional to `1 / λ_j`.

use rayon::prelude::*;

use crate::data::{Dataset, Standardizer};
use crate::error::{Error, Result};
use crate::linalg::{eigh, Matrix};
use crate::mlp::{train_mlp_observed, MlpModel, TrainConfig, TrainHistory};
use crate::seed;

pub const EIGENVALUE_FLOOR: f64 = 1e-8;

/// All features except `excluded_index`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSubset {
    pub excluded_index: usize,
    pub retained_indices: Vec<usize>,
}

impl FeatureSubset {
    pub fn leave_one_out(n_features: usize, excluded_index: usize) -> Self {
        Self {
            excluded_index,
            retained_indices: (0..n_features).filter(|&i| i != excluded_index).collect(),
        }
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.retained_indices.iter().map(|&i| x[i]).collect()
    }
}

/// The `n_features` leave-one-out subsets, ordered by excluded index.
pub fn generate_subsets(n_features: usize) -> Result<Vec<FeatureSubset>> {
    if n_features < 2 {
        return Err(Error::arg(format!(
            "need at least two features for leave-one-out subsets, got {n_features}"
        )));
    }
    Ok((0..n_features)
        .map(|j| FeatureSubset::leave_one_out(n_features, j))
        .collect())
}

/// Centering, rotation onto the principal axes, and per-axis rescaling:
/// `x ↦ (x − means) · P · Λ^{-1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningTransform {
    pub means: Vec<f64>,
    /// Columns are principal directions, ordered like `eigenvalues`.
    pub eigenvectors: Matrix,
    /// Descending, already floored.
    pub eigenvalues: Vec<f64>,
    pub eigenvalue_floor: f64,
}

impl WhiteningTransform {
    pub fn identity(n: usize) -> Self {
        Self {
            means: vec![0.0; n],
            eigenvectors: Matrix::identity(n),
            eigenvalues: vec![1.0; n],
            eigenvalue_floor: EIGENVALUE_FLOOR,
        }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.dim() {
            return Err(Error::Dimension {
                context: "whitening input columns",
                expected: self.dim(),
                found: x.cols(),
            });
        }
        let mut out = Matrix::zeros(x.rows(), self.dim());
        let mut centered = vec![0.0; self.dim()];
        for r in 0..x.rows() {
            self.apply_into(x.row(r), &mut centered, out.row_mut(r));
        }
        Ok(out)
    }

    pub fn apply_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                context: "whitening input length",
                expected: self.dim(),
                found: x.len(),
            });
        }
        let mut out = vec![0.0; self.dim()];
        let mut centered = vec![0.0; self.dim()];
        self.apply_into(x, &mut centered, &mut out);
        Ok(out)
    }

    fn apply_into(&self, x: &[f64], centered: &mut [f64], out: &mut [f64]) {
        for ((c, v), m) in centered.iter_mut().zip(x).zip(&self.means) {
            *c = v - m;
        }
        out.fill(0.0);
        for (i, &c) in centered.iter().enumerate() {
            for (o, p) in out.iter_mut().zip(self.eigenvectors.row(i)) {
                *o += c * p;
            }
        }
        for (o, l) in out.iter_mut().zip(&self.eigenvalues) {
            *o /= l.sqrt();
        }
    }
}

/// Fits a whitening transform to the rows of `x` using the sample covariance
/// `XcᵀXc / (M − 1)`. Eigenvalues below `floor` are raised to it.
pub fn fit_whitening(x: &Matrix, floor: f64) -> Result<WhiteningTransform> {
    let (m, n) = x.shape();
    if m < 2 {
        return Err(Error::arg(format!(
            "whitening needs at least two rows, got {m}"
        )));
    }
    if floor.is_nan() || floor <= 0.0 {
        return Err(Error::arg(format!("eigenvalue floor must be positive, got {floor}")));
    }
    let mut means = vec![0.0; n];
    for row in x.row_iter() {
        for (mu, v) in means.iter_mut().zip(row) {
            *mu += v;
        }
    }
    means.iter_mut().for_each(|mu| *mu /= m as f64);

    let mut cov = Matrix::zeros(n, n);
    let mut centered = vec![0.0; n];
    for row in x.row_iter() {
        for ((c, v), mu) in centered.iter_mut().zip(row).zip(&means) {
            *c = v - mu;
        }
        for i in 0..n {
            for j in i..n {
                let v = cov.get(i, j) + centered[i] * centered[j];
                cov.set(i, j, v);
            }
        }
    }
    let denom = (m - 1) as f64;
    for i in 0..n {
        for j in i..n {
            let v = cov.get(i, j) / denom;
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }

    let eig = eigh(&cov)?;
    Ok(WhiteningTransform {
        means,
        eigenvectors: eig.eigenvectors,
        eigenvalues: eig.eigenvalues.into_iter().map(|l| l.max(floor)).collect(),
        eigenvalue_floor: floor,
    })
}

pub fn apply_whitening(t: &WhiteningTransform, x: &Matrix) -> Result<Matrix> {
    t.apply(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorMode {
    /// Every member weighs `1 / N`.
    Equiprobable,
    /// Member `j` weighs `(1/λ_j) / Σ_k (1/λ_k)`.
    Weighted,
}

/// Mixture weights of the forest members.
pub fn compute_priors(eigenvalues: &[f64], mode: PriorMode) -> Result<Vec<f64>> {
    if eigenvalues.is_empty() {
        return Err(Error::arg("no eigenvalues"));
    }
    if let Some(bad) = eigenvalues.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::arg(format!("eigenvalues must be positive, got {bad}")));
    }
    let n = eigenvalues.len();
    Ok(match mode {
        PriorMode::Equiprobable => vec![1.0 / n as f64; n],
        PriorMode::Weighted => {
            if eigenvalues.iter().all(|&l| l == eigenvalues[0]) {
                return Ok(vec![1.0 / n as f64; n]);
            }
            let inv: Vec<f64> = eigenvalues.iter().map(|l| 1.0 / l).collect();
            let total: f64 = inv.iter().sum();
            inv.into_iter().map(|v| v / total).collect()
        }
    })
}

/// A trained ensemble, self-contained for inference on raw features.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub class_count: usize,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
    /// Fitted on the training rows; applied before whitening.
    pub standardizer: Standardizer,
    pub whitening: Option<WhiteningTransform>,
    pub subsets: Vec<FeatureSubset>,
    pub members: Vec<MlpModel>,
    pub priors_equiprobable: Vec<f64>,
    /// Present only for whitened forests.
    pub priors_weighted: Option<Vec<f64>>,
}

/// Training outputs beyond the model itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestTraining {
    pub model: ForestModel,
    pub histories: Vec<TrainHistory>,
    /// `snapshots[j][e]` holds member `j` after epoch `e + 1`, when requested.
    pub snapshots: Option<Vec<Vec<MlpModel>>>,
}

/// Trains a forest on `rows` of `ds`. Member `j` uses a seed derived from
/// `base_seed` and `j`, so results do not depend on scheduling.
pub fn train_forest(
    ds: &Dataset,
    rows: &[usize],
    cfg: &TrainConfig,
    whiten: bool,
    base_seed: u64,
) -> Result<ForestModel> {
    Ok(train_forest_detailed(ds, rows, cfg, whiten, base_seed, false)?.model)
}

/// [`train_forest`] that also returns member histories and, if
/// `keep_snapshots`, per-epoch member parameters.
pub fn train_forest_detailed(
    ds: &Dataset,
    rows: &[usize],
    cfg: &TrainConfig,
    whiten: bool,
    base_seed: u64,
    keep_snapshots: bool,
) -> Result<ForestTraining> {
    let n = ds.n_features();
    let subsets = generate_subsets(n)?;
    if rows.is_empty() {
        return Err(Error::arg("empty training set"));
    }
    let standardizer = Standardizer::fit(ds.features(), rows)?;
    let (raw, labels) = ds.subset(rows);
    let mut inputs = standardizer.apply(&raw)?;
    let whitening = if whiten {
        let t = fit_whitening(&inputs, EIGENVALUE_FLOOR)?;
        inputs = t.apply(&inputs)?;
        Some(t)
    } else {
        None
    };

    let trained: Vec<(MlpModel, TrainHistory, Vec<MlpModel>)> = subsets
        .par_iter()
        .map(|subset| {
            let x = inputs.select_columns(&subset.retained_indices);
            let mut snaps = Vec::new();
            let seed = seed::derive(base_seed, subset.excluded_index as u64);
            let (model, history) =
                train_mlp_observed(&x, &labels, ds.class_count(), cfg, seed, |_, m| {
                    if keep_snapshots {
                        snaps.push(m.clone());
                    }
                })?;
            Ok((model, history, snaps))
        })
        .collect::<Result<_>>()?;

    let priors_equiprobable = compute_priors(&vec![1.0; n], PriorMode::Equiprobable)?;
    let priors_weighted = whitening
        .as_ref()
        .map(|t| compute_priors(&t.eigenvalues, PriorMode::Weighted))
        .transpose()?;

    let mut members = Vec::with_capacity(n);
    let mut histories = Vec::with_capacity(n);
    let mut snapshots = Vec::with_capacity(n);
    for (m, h, s) in trained {
        members.push(m);
        histories.push(h);
        snapshots.push(s);
    }
    Ok(ForestTraining {
        model: ForestModel {
            class_count: ds.class_count(),
            feature_names: ds.feature_names().to_vec(),
            class_names: ds.class_names().to_vec(),
            standardizer,
            whitening,
            subsets,
            members,
            priors_equiprobable,
            priors_weighted,
        },
        histories,
        snapshots: keep_snapshots.then_some(snapshots),
    })
}

impl ForestModel {
    pub fn n_features(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_whitened(&self) -> bool {
        self.whitening.is_some()
    }

    /// Maps raw feature rows into the space the members were trained on.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        let z = self.standardizer.apply(x)?;
        match &self.whitening {
            Some(t) => t.apply(&z),
            None => Ok(z),
        }
    }

    /// Member posteriors (`N × C`) for one raw sample.
    pub fn member_probabilities(&self, x: &[f64]) -> Result<Matrix> {
        if x.len() != self.n_features() {
            return Err(Error::Dimension {
                context: "forest input features",
                expected: self.n_features(),
                found: x.len(),
            });
        }
        let mut z = x.to_vec();
        self.standardizer.apply_row(&mut z);
        if let Some(t) = &self.whitening {
            z = t.apply_row(&z)?;
        }
        self.member_probabilities_transformed(&z)
    }

    /// Member posteriors for a sample already in the members' input space.
    pub fn member_probabilities_transformed(&self, z: &[f64]) -> Result<Matrix> {
        member_probabilities_with(&self.members, &self.subsets, self.class_count, z)
    }

    /// One `N × C` posterior matrix per row of raw `x`.
    pub fn member_probabilities_batch(&self, x: &Matrix) -> Result<Vec<Matrix>> {
        let z = self.transform(x)?;
        member_probabilities_batch_with(&self.members, &self.subsets, self.class_count, &z)
    }
}

/// Posteriors of arbitrary member parameters (e.g. training snapshots) on a
/// transformed sample.
pub fn member_probabilities_with(
    members: &[MlpModel],
    subsets: &[FeatureSubset],
    class_count: usize,
    z: &[f64],
) -> Result<Matrix> {
    if z.len() != subsets.len() {
        return Err(Error::Dimension {
            context: "member input features",
            expected: subsets.len(),
            found: z.len(),
        });
    }
    let mut out = Matrix::zeros(members.len(), class_count);
    for (j, (member, subset)) in members.iter().zip(subsets).enumerate() {
        let p = member.forward(&subset.project(z))?;
        out.row_mut(j).copy_from_slice(&p);
    }
    Ok(out)
}

/// Batched [`member_probabilities_with`] over the rows of transformed `z`.
pub fn member_probabilities_batch_with(
    members: &[MlpModel],
    subsets: &[FeatureSubset],
    class_count: usize,
    z: &Matrix,
) -> Result<Vec<Matrix>> {
    if z.cols() != subsets.len() {
        return Err(Error::Dimension {
            context: "member input features",
            expected: subsets.len(),
            found: z.cols(),
        });
    }
    let per_member: Vec<Matrix> = members
        .iter()
        .zip(subsets)
        .map(|(m, s)| m.predict_proba(&z.select_columns(&s.retained_indices)))
        .collect::<Result<_>>()?;
    Ok((0..z.rows())
        .map(|r| {
            let mut out = Matrix::zeros(members.len(), class_count);
            for (j, p) in per_member.iter().enumerate() {
                out.row_mut(j).copy_from_slice(p.row(r));
            }
            out
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rows: usize, cols: usize, s: u64) -> Matrix {
        let mut rng = seed::rng(s);
        let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
        Matrix::new(rows, cols, data).unwrap()
    }

    fn covariance(x: &Matrix) -> Matrix {
        let (m, n) = x.shape();
        let means: Vec<f64> = (0..n).map(|j| x.column(j).iter().sum::<f64>() / m as f64).collect();
        let mut c = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let s: f64 = x
                    .row_iter()
                    .map(|r| (r[i] - means[i]) * (r[j] - means[j]))
                    .sum();
                c.set(i, j, s / (m - 1) as f64);
            }
        }
        c
    }

    #[test]
    fn subsets_leave_one_out() {
        let s = generate_subsets(4).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s[1].retained_indices, vec![0, 2, 3]);
        let s = generate_subsets(2).unwrap();
        assert_eq!(s[0].retained_indices, vec![1]);
        assert_eq!(s[1].retained_indices, vec![0]);
        assert_eq!(generate_subsets(64).unwrap().len(), 64);
        assert!(generate_subsets(1).is_err());
    }

    #[test]
    fn white_data_stays_white() {
        let x = gaussian(10_000, 3, 1);
        let t = fit_whitening(&x, EIGENVALUE_FLOOR).unwrap();
        for l in &t.eigenvalues {
            assert!((l - 1.0).abs() < 0.06, "{l}");
        }
        // P is orthogonal, so whitening is nearly a rotation
        let ptp = t.eigenvectors.transpose().matmul(&t.eigenvectors).unwrap();
        assert!(ptp.max_abs_diff(&Matrix::identity(3)) < 1e-8);
    }

    #[test]
    fn whitened_covariance_is_identity() {
        let base = gaussian(200, 4, 2);
        let mix = Matrix::from_rows(&[
            [2.0, 0.5, 0.0, 0.1],
            [0.0, 1.0, 0.3, 0.0],
            [0.7, 0.0, 0.2, 0.0],
            [0.0, 0.0, 0.0, 3.0],
        ])
        .unwrap();
        let x = base.matmul(&mix).unwrap();
        let t = fit_whitening(&x, EIGENVALUE_FLOOR).unwrap();
        let w = t.apply(&x).unwrap();
        assert!(covariance(&w).max_abs_diff(&Matrix::identity(4)) < 1e-6);
        assert!(t.eigenvalues.windows(2).all(|p| p[0] >= p[1]));
    }

    #[test]
    fn rank_deficient_input_is_floored() {
        let mut rng = seed::rng(3);
        let rows: Vec<[f64; 2]> = (0..50)
            .map(|_| {
                let v: f64 = rng.random_range(-1.0..1.0);
                [v, 2.0 * v]
            })
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let t = fit_whitening(&x, EIGENVALUE_FLOOR).unwrap();
        assert_eq!(t.eigenvalues[1], EIGENVALUE_FLOOR);
        let w = t.apply(&x).unwrap();
        assert!(w.as_slice().iter().all(|v| v.is_finite()));
        let c = covariance(&w);
        assert!((c.get(0, 0) - 1.0).abs() < 1e-6);
        assert!(fit_whitening(&Matrix::zeros(1, 2), EIGENVALUE_FLOOR).is_err());
    }

    #[test]
    fn whitening_identity_and_centering() {
        let x = gaussian(5, 3, 4);
        assert_eq!(WhiteningTransform::identity(3).apply(&x).unwrap(), x);
        let t = fit_whitening(&gaussian(20, 3, 5), EIGENVALUE_FLOOR).unwrap();
        let z = t.apply_row(&t.means).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        assert!(t.apply(&Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn prior_examples() {
        let p = compute_priors(&[2.0, 1.0, 1.0], PriorMode::Weighted).unwrap();
        for (a, b) in p.iter().zip([0.2, 0.4, 0.4]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(
            compute_priors(&[3.0; 4], PriorMode::Weighted).unwrap(),
            vec![0.25; 4]
        );
        assert_eq!(
            compute_priors(&[5.0, 1.0], PriorMode::Equiprobable).unwrap(),
            vec![0.5; 2]
        );
        assert!(compute_priors(&[1.0, 0.0], PriorMode::Weighted).is_err());
        assert!(compute_priors(&[], PriorMode::Weighted).is_err());
    }

    fn toy_dataset(s: u64) -> Dataset {
        let mut rng = seed::rng(s);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..30 {
            let c = i % 3;
            rows.push([
                c as f64 + rng.random_range(-0.3..0.3),
                -(c as f64) + rng.random_range(-0.3..0.3),
                rng.random_range(-1.0..1.0),
                0.5 * c as f64 + rng.random_range(-0.3..0.3),
            ]);
            labels.push(c);
        }
        Dataset::from_parts(Matrix::from_rows(&rows).unwrap(), labels, 3).unwrap()
    }

    fn quick_cfg() -> TrainConfig {
        TrainConfig {
            hidden: 16,
            epochs: 5,
            batches_per_epoch: 10,
            ..Default::default()
        }
    }

    #[test]
    fn forest_shape_and_determinism() {
        let ds = toy_dataset(1);
        let rows: Vec<usize> = (0..30).collect();
        let f = train_forest(&ds, &rows, &quick_cfg(), false, 7).unwrap();
        assert_eq!(f.members.len(), 4);
        assert!(f.members.iter().all(|m| m.d_in() == 3));
        assert!(f.whitening.is_none() && f.priors_weighted.is_none());
        assert_eq!(f, train_forest(&ds, &rows, &quick_cfg(), false, 7).unwrap());

        let w = train_forest(&ds, &rows, &quick_cfg(), true, 7).unwrap();
        let priors = w.priors_weighted.as_ref().unwrap();
        assert!((priors.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(priors.windows(2).all(|p| p[0] <= p[1]));
    }

    #[test]
    fn snapshots_follow_histories() {
        let ds = toy_dataset(2);
        let rows: Vec<usize> = (0..30).collect();
        let t = train_forest_detailed(&ds, &rows, &quick_cfg(), false, 1, true).unwrap();
        let snaps = t.snapshots.unwrap();
        for (s, h) in snaps.iter().zip(&t.histories) {
            assert_eq!(s.len(), h.epochs());
        }
    }

    #[test]
    fn zero_members_are_uniform() {
        let n = 3;
        let model = ForestModel {
            class_count: 2,
            feature_names: vec!["a".into(), "b".into(), "c".into()],
            class_names: vec!["x".into(), "y".into()],
            standardizer: Standardizer::identity(n),
            whitening: None,
            subsets: generate_subsets(n).unwrap(),
            members: (0..n).map(|_| MlpModel::zeros(n - 1, 4, 2).unwrap()).collect(),
            priors_equiprobable: vec![1.0 / 3.0; 3],
            priors_weighted: None,
        };
        let p = model.member_probabilities(&[1.0, 2.0, 3.0]).unwrap();
        assert!(p.as_slice().iter().all(|&v| v == 0.5));
        assert!(model.member_probabilities(&[1.0]).is_err());
    }

    #[test]
    fn rows_sum_to_one_and_batch_agrees() {
        let ds = toy_dataset(3);
        let rows: Vec<usize> = (0..30).collect();
        let f = train_forest(&ds, &rows, &quick_cfg(), true, 2).unwrap();
        let mut rng = seed::rng(4);
        let data: Vec<f64> = (0..1000 * 4).map(|_| rng.random_range(-50.0..50.0)).collect();
        let x = Matrix::new(1000, 4, data).unwrap();
        let batch = f.member_probabilities_batch(&x).unwrap();
        for (r, b) in batch.iter().enumerate() {
            let single = f.member_probabilities(x.row(r)).unwrap();
            assert!(single.max_abs_diff(b) < 1e-12);
            for row in single.row_iter() {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn member_is_blind_to_its_excluded_coordinate(s in any::<u64>(), bump in -100.0f64..100.0) {
            let n = 4;
            let subsets = generate_subsets(n).unwrap();
            let members: Vec<MlpModel> = (0..n)
                .map(|j| MlpModel::new(n - 1, 6, 3, s ^ j as u64).unwrap())
                .collect();
            let mut rng = seed::rng(s);
            let z: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let base = member_probabilities_with(&members, &subsets, 3, &z).unwrap();
            for j in 0..n {
                let mut moved = z.clone();
                moved[j] += bump;
                let p = member_probabilities_with(&members, &subsets, 3, &moved).unwrap();
                prop_assert_eq!(p.row(j), base.row(j));
                moved[j] = 0.0;
                let p = member_probabilities_with(&members, &subsets, 3, &moved).unwrap();
                prop_assert_eq!(p.row(j), base.row(j));
            }
        }

        #[test]
        fn weighted_priors_normalized_and_monotone(
            eig in prop::collection::vec(1e-6f64..1e6, 1..20),
        ) {
            let p = compute_priors(&eig, PriorMode::Weighted).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for a in 0..eig.len() {
                for b in 0..eig.len() {
                    if eig[a] > eig[b] {
                        prop_assert!(p[a] < p[b]);
                    }
                }
            }
            let e = compute_priors(&eig, PriorMode::Equiprobable).unwrap();
            prop_assert!((e.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
