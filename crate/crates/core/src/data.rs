//! Dataset ingestion, standardization and the inverted stratified K-fold
//! protocol.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::seed;

/// Floor applied to per-feature standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

/// Labelled feature table. Labels are dense class indices in `0..class_count`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    class_count: usize,
    feature_names: Vec<String>,
    class_names: Vec<String>,
}

impl Dataset {
    /// Validates and assembles a dataset. `class_names[c]` is the raw label of
    /// class `c`.
    pub fn new(
        features: Matrix,
        labels: Vec<usize>,
        feature_names: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::Dimension {
                context: "label count",
                expected: features.rows(),
                found: labels.len(),
            });
        }
        if feature_names.len() != features.cols() {
            return Err(Error::Dimension {
                context: "feature name count",
                expected: features.cols(),
                found: feature_names.len(),
            });
        }
        let class_count = class_names.len();
        if class_count < 2 {
            return Err(Error::Data(format!(
                "need at least two classes, found {class_count}"
            )));
        }
        let mut support = vec![0usize; class_count];
        for &y in &labels {
            if y >= class_count {
                return Err(Error::Data(format!(
                    "label {y} out of range for {class_count} classes"
                )));
            }
            support[y] += 1;
        }
        if let Some(c) = support.iter().position(|&n| n == 0) {
            return Err(Error::Data(format!("class {c} has no samples")));
        }
        Ok(Self {
            features,
            labels,
            class_count,
            feature_names,
            class_names,
        })
    }

    /// Builds a dataset with generated feature and class names.
    pub fn from_parts(features: Matrix, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        let feature_names = (0..features.cols()).map(|j| format!("x{j}")).collect();
        let class_names = (0..class_count).map(|c| c.to_string()).collect();
        Self::new(features, labels, feature_names, class_names)
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Number of samples `M`.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of features `N`.
    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn class_support(&self) -> Vec<usize> {
        let mut support = vec![0; self.class_count];
        for &y in &self.labels {
            support[y] += 1;
        }
        support
    }

    /// Features and labels of the given rows.
    pub fn subset(&self, indices: &[usize]) -> (Matrix, Vec<usize>) {
        (
            self.features.select_rows(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

/// Reads a delimited file with a header row. Every column except
/// `label_column` must hold real numbers. Raw labels are mapped to class
/// indices by their sorted order.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str, delimiter: u8) -> Result<Dataset> {
    let path = path.as_ref();
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let header: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_owned)
        .collect();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| {
            Error::Data(format!(
                "label column {label_column:?} not found in {}",
                path.display()
            ))
        })?;
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    if feature_names.is_empty() {
        return Err(Error::Data("no feature columns".into()));
    }

    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        // header is line 1
        let line = row + 2;
        if record.len() != header.len() {
            return Err(Error::Data(format!(
                "row {line} has {} fields, header has {}",
                record.len(),
                header.len()
            )));
        }
        for (i, cell) in record.iter().enumerate() {
            if i == label_idx {
                raw_labels.push(cell.to_owned());
                continue;
            }
            let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                Error::Parse {
                    row: line,
                    column: header[i].clone(),
                    value: cell.to_owned(),
                }
            })?;
            values.push(v);
        }
    }

    let class_names: Vec<String> = raw_labels
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if class_names.len() < 2 {
        return Err(Error::Data(format!(
            "label column {label_column:?} has {} distinct value(s); need at least two classes",
            class_names.len()
        )));
    }
    let labels = raw_labels
        .iter()
        .map(|l| class_names.binary_search(l).expect("label collected above"))
        .collect();
    let features = Matrix::new(raw_labels.len(), feature_names.len(), values)?;
    Dataset::new(features, labels, feature_names, class_names)
}

/// Per-feature affine rescaling to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stddevs: Vec<f64>,
}

impl Standardizer {
    pub fn identity(n: usize) -> Self {
        Self {
            means: vec![0.0; n],
            stddevs: vec![1.0; n],
        }
    }

    /// Mean and population standard deviation of each column of `features`,
    /// restricted to `indices`.
    pub fn fit(features: &Matrix, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::arg("cannot fit a standardizer on zero rows"));
        }
        let n = features.cols();
        let count = indices.len() as f64;
        let mut means = vec![0.0; n];
        for &i in indices {
            for (m, x) in means.iter_mut().zip(features.row(i)) {
                *m += x;
            }
        }
        means.iter_mut().for_each(|m| *m /= count);
        let mut vars = vec![0.0; n];
        for &i in indices {
            for ((v, x), m) in vars.iter_mut().zip(features.row(i)).zip(&means) {
                *v += (x - m) * (x - m);
            }
        }
        let stddevs = vars
            .into_iter()
            .map(|v| (v / count).sqrt().max(STD_FLOOR))
            .collect();
        Ok(Self { means, stddevs })
    }

    pub fn apply(&self, features: &Matrix) -> Result<Matrix> {
        if features.cols() != self.means.len() {
            return Err(Error::Dimension {
                context: "standardizer input columns",
                expected: self.means.len(),
                found: features.cols(),
            });
        }
        let mut out = features.clone();
        for r in 0..out.rows() {
            self.apply_row(out.row_mut(r));
        }
        Ok(out)
    }

    pub fn apply_row(&self, row: &mut [f64]) {
        for ((x, m), s) in row.iter_mut().zip(&self.means).zip(&self.stddevs) {
            *x = (*x - m) / s;
        }
    }
}

pub fn fit_standardizer(ds: &Dataset, indices: &[usize]) -> Result<Standardizer> {
    Standardizer::fit(ds.features(), indices)
}

pub fn apply_standardizer(s: &Standardizer, features: &Matrix) -> Result<Matrix> {
    s.apply(features)
}

/// Train/validation partition of sample indices. Both lists are sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
    pub fold_id: usize,
    pub k: usize,
}

/// Stratified K-fold with the roles of the folds inverted: split `i` trains
/// on fold `i` alone and validates on the other `k - 1` folds.
///
/// Each class is shuffled with a generator seeded by `seed` and dealt
/// round-robin into the folds. The dealing position carries over from one
/// class to the next so fold sizes stay within one sample of each other.
pub fn inverted_stratified_kfold(ds: &Dataset, k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(Error::arg(format!("k must be at least 2, got {k}")));
    }
    for (class, &count) in ds.class_support().iter().enumerate() {
        if count < k {
            return Err(Error::Stratification {
                class,
                count,
                required: k,
            });
        }
    }
    let mut rng = seed::rng(seed);
    let mut fold_of = vec![0usize; ds.len()];
    let mut next = 0;
    for class in 0..ds.class_count() {
        let mut members: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels()[i] == class).collect();
        members.shuffle(&mut rng);
        for i in members {
            fold_of[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok((0..k)
        .map(|fold| {
            let (train, validation) = (0..ds.len()).partition(|&i| fold_of[i] == fold);
            FoldSplit {
                train_indices: train,
                validation_indices: validation,
                fold_id: fold,
                k,
            }
        })
        .collect())
}

/// Alternative split: `per_class` randomly chosen samples of every class for
/// training, everything else for validation. `repeats` independent draws are
/// returned, numbered like folds.
pub fn per_class_splits(
    ds: &Dataset,
    per_class: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<FoldSplit>> {
    if per_class == 0 || repeats == 0 {
        return Err(Error::arg("per-class count and repeats must be at least 1"));
    }
    for (class, &count) in ds.class_support().iter().enumerate() {
        // at least one validation sample per class
        if count <= per_class {
            return Err(Error::Stratification {
                class,
                count,
                required: per_class + 1,
            });
        }
    }
    let mut splits = Vec::with_capacity(repeats);
    for rep in 0..repeats {
        let mut rng = seed::rng(seed::derive(seed, rep as u64));
        let mut in_train = vec![false; ds.len()];
        for class in 0..ds.class_count() {
            let mut members: Vec<usize> =
                (0..ds.len()).filter(|&i| ds.labels()[i] == class).collect();
            members.shuffle(&mut rng);
            for &i in &members[..per_class] {
                in_train[i] = true;
            }
        }
        let (train, validation) = (0..ds.len()).partition(|&i| in_train[i]);
        splits.push(FoldSplit {
            train_indices: train,
            validation_indices: validation,
            fold_id: rep,
            k: repeats,
        });
    }
    Ok(splits)
}

/// Both sides of the `C^N < M/K` data-starvation condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurseReport {
    pub satisfied: bool,
    pub lhs: f64,
    pub rhs: f64,
}

/// Evaluates `C^N < M/K`. An integer overflow of `C^N` counts as
/// unsatisfied with an infinite left-hand side.
pub fn curse_condition(c: usize, n: usize, m: usize, k: usize) -> Result<CurseReport> {
    if c == 0 || n == 0 || m == 0 || k == 0 {
        return Err(Error::arg("curse condition inputs must all be at least 1"));
    }
    let rhs = m as f64 / k as f64;
    let lhs = u32::try_from(n)
        .ok()
        .and_then(|n| (c as u128).checked_pow(n))
        .map_or(f64::INFINITY, |v| v as f64);
    Ok(CurseReport {
        satisfied: lhs.is_finite() && lhs < rhs,
        lhs,
        rhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn balanced(per_class: usize, classes: usize, n_features: usize) -> Dataset {
        let m = per_class * classes;
        let mut rng = seed::rng(11);
        let data = (0..m * n_features).map(|_| rng.random::<f64>()).collect();
        let labels = (0..m).map(|i| i % classes).collect();
        Dataset::from_parts(Matrix::new(m, n_features, data).unwrap(), labels, classes).unwrap()
    }

    #[test]
    fn sorted_label_mapping() {
        let f = write_tmp("x,y,label\n1,2,b\n3,4,a\n5,6,b\n");
        let ds = load_csv(f.path(), "label", b',').unwrap();
        assert_eq!(ds.labels(), &[1, 0, 1]);
        assert_eq!(ds.class_names(), &["a", "b"]);
        assert_eq!(ds.feature_names(), &["x", "y"]);
        assert_eq!(ds.features().row(1), &[3.0, 4.0]);
    }

    #[test]
    fn label_column_anywhere_and_custom_delimiter() {
        let f = write_tmp("label;x\nu;1.5\nv;-2e3\n");
        let ds = load_csv(f.path(), "label", b';').unwrap();
        assert_eq!(ds.features().as_slice(), &[1.5, -2000.0]);
    }

    #[test]
    fn single_class_rejected() {
        let f = write_tmp("x,label\n1,a\n2,a\n");
        let err = load_csv(f.path(), "label", b',').unwrap_err();
        assert!(matches!(err, Error::Data(ref m) if m.contains("two classes")), "{err}");
    }

    #[test]
    fn unparseable_cell_reports_position() {
        let f = write_tmp("x,y,label\n1,2,a\n3,oops,b\n");
        match load_csv(f.path(), "label", b',').unwrap_err() {
            Error::Parse { row, column, value } => {
                assert_eq!((row, column.as_str(), value.as_str()), (3, "y", "oops"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn missing_file_and_column() {
        assert!(matches!(
            load_csv("/nonexistent/file.csv", "label", b','),
            Err(Error::Io { .. })
        ));
        let f = write_tmp("x,y\n1,2\n");
        assert!(matches!(
            load_csv(f.path(), "label", b','),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn standardizer_forced_values() {
        let x = Matrix::from_rows(&[[0.0, 5.0], [2.0, 5.0]]).unwrap();
        let s = Standardizer::fit(&x, &[0, 1]).unwrap();
        assert_eq!(s.means, vec![1.0, 5.0]);
        assert_eq!(s.stddevs, vec![1.0, STD_FLOOR]);
        let t = s.apply(&x).unwrap();
        assert_eq!(t.column(0), vec![-1.0, 1.0]);
        assert_eq!(t.column(1), vec![0.0, 0.0]);
    }

    #[test]
    fn standardizer_matches_two_pass_oracle() {
        let mut rng = seed::rng(5);
        let data: Vec<f64> = (0..100).map(|_| rng.random_range(-3.0..7.0)).collect();
        let x = Matrix::new(20, 5, data).unwrap();
        let rows: Vec<usize> = (0..20).collect();
        let s = Standardizer::fit(&x, &rows).unwrap();
        for j in 0..5 {
            let col = x.column(j);
            let mean = col.iter().sum::<f64>() / 20.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 20.0;
            assert!((s.means[j] - mean).abs() < 1e-12);
            assert!((s.stddevs[j] - var.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn standardizer_edge_cases() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert!(Standardizer::fit(&x, &[]).is_err());
        assert_eq!(Standardizer::identity(2).apply(&x).unwrap(), x);
        let s = Standardizer::fit(&x, &[0, 1]).unwrap();
        let means = Matrix::from_rows(std::slice::from_ref(&s.means)).unwrap();
        assert_eq!(s.apply(&means).unwrap().as_slice(), &[0.0, 0.0]);
        assert!(matches!(
            s.apply(&Matrix::zeros(1, 3)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn fit_uses_only_given_rows() {
        let x = Matrix::from_rows(&[[0.0], [2.0], [1000.0]]).unwrap();
        let s = Standardizer::fit(&x, &[0, 1]).unwrap();
        assert_eq!(s.means, vec![1.0]);
    }

    #[test]
    fn kfold_tiny_balanced() {
        let ds = balanced(2, 2, 1);
        let splits = inverted_stratified_kfold(&ds, 2, 0).unwrap();
        assert_eq!(splits.len(), 2);
        for s in &splits {
            assert_eq!(s.train_indices.len(), 2);
            let mut classes: Vec<usize> = s.train_indices.iter().map(|&i| ds.labels()[i]).collect();
            classes.sort_unstable();
            assert_eq!(classes, vec![0, 1]);
        }
    }

    #[test]
    fn kfold_iris_shape() {
        let ds = balanced(50, 3, 4);
        for s in inverted_stratified_kfold(&ds, 10, 42).unwrap() {
            assert_eq!(s.train_indices.len(), 15);
            assert_eq!(s.validation_indices.len(), 135);
            let mut per_class = [0; 3];
            s.train_indices.iter().for_each(|&i| per_class[ds.labels()[i]] += 1);
            assert_eq!(per_class, [5, 5, 5]);
        }
    }

    #[test]
    fn kfold_deterministic_and_seed_sensitive() {
        let ds = balanced(20, 3, 2);
        let a = inverted_stratified_kfold(&ds, 4, 9).unwrap();
        assert_eq!(a, inverted_stratified_kfold(&ds, 4, 9).unwrap());
        assert_ne!(a, inverted_stratified_kfold(&ds, 4, 10).unwrap());
    }

    #[test]
    fn kfold_errors() {
        let ds = balanced(3, 2, 1);
        assert!(matches!(
            inverted_stratified_kfold(&ds, 4, 0),
            Err(Error::Stratification { count: 3, required: 4, .. })
        ));
        assert!(inverted_stratified_kfold(&ds, 1, 0).is_err());
    }

    #[test]
    fn per_class_split_counts() {
        let ds = balanced(10, 3, 2);
        let splits = per_class_splits(&ds, 5, 3, 1).unwrap();
        assert_eq!(splits.len(), 3);
        for s in &splits {
            assert_eq!(s.train_indices.len(), 15);
            assert_eq!(s.validation_indices.len(), 15);
        }
        assert!(per_class_splits(&ds, 10, 1, 1).is_err());
    }

    #[test]
    fn curse_examples() {
        let r = curse_condition(3, 4, 150, 10).unwrap();
        assert_eq!((r.satisfied, r.lhs, r.rhs), (false, 81.0, 15.0));
        let r = curse_condition(1, 1, 10, 2).unwrap();
        assert_eq!((r.satisfied, r.lhs, r.rhs), (true, 1.0, 5.0));
        let r = curse_condition(10, 300, 1000, 10).unwrap();
        assert!(!r.satisfied && r.lhs == f64::INFINITY && r.rhs == 100.0);
        assert!(curse_condition(0, 1, 1, 1).is_err());
    }

    proptest! {
        #[test]
        fn kfold_partition_and_stratification(
            sizes in prop::collection::vec(3usize..25, 2..5),
            k in 2usize..4,
            s in any::<u64>(),
        ) {
            let labels: Vec<usize> = sizes.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
            let m = labels.len();
            let ds = Dataset::from_parts(Matrix::zeros(m, 1), labels, sizes.len()).unwrap();
            let splits = inverted_stratified_kfold(&ds, k, s).unwrap();
            prop_assert_eq!(splits.len(), k);
            for split in &splits {
                let mut all: Vec<usize> = split.train_indices.iter().chain(&split.validation_indices).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..m).collect::<Vec<_>>());
                for (c, &n) in sizes.iter().enumerate() {
                    let count = split.train_indices.iter().filter(|&&i| ds.labels()[i] == c).count();
                    prop_assert!(count.abs_diff(n / k) <= 1);
                    prop_assert!(count >= 1);
                }
            }
        }

        #[test]
        fn standardized_fit_rows_are_centered(s in any::<u64>(), rows in 2usize..30) {
            let mut rng = seed::rng(s);
            let data = (0..rows * 3).map(|_| rng.random_range(-100.0..100.0)).collect();
            let x = Matrix::new(rows, 3, data).unwrap();
            let idx: Vec<usize> = (0..rows).collect();
            let st = Standardizer::fit(&x, &idx).unwrap();
            let t = st.apply(&x).unwrap();
            for j in 0..3 {
                let col = t.column(j);
                let mean = col.iter().sum::<f64>() / rows as f64;
                let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rows as f64).sqrt();
                prop_assert!(mean.abs() < 1e-10);
                prop_assert!((sd - 1.0).abs() < 1e-10);
            }
        }
    }
}
