//! Confusion matrices, accuracy and support-weighted F1.

use crate::error::{Error, Result};

/// `counts[t][p]`: samples of true class `t` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn add(&mut self, truth: usize, predicted: usize) -> Result<()> {
        if truth >= self.classes || predicted >= self.classes {
            return Err(Error::arg(format!(
                "label pair ({truth}, {predicted}) out of range for {} classes",
                self.classes
            )));
        }
        self.counts[truth * self.classes + predicted] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    /// Row sums.
    pub fn support(&self) -> Vec<u64> {
        (0..self.classes)
            .map(|t| (0..self.classes).map(|p| self.get(t, p)).sum())
            .collect()
    }

    /// Column sums.
    pub fn predicted_counts(&self) -> Vec<u64> {
        (0..self.classes)
            .map(|p| (0..self.classes).map(|t| self.get(t, p)).sum())
            .collect()
    }

    pub fn accuracy(&self) -> Result<f64> {
        let total = self.nonempty_total()?;
        Ok(self.trace() as f64 / total as f64)
    }

    fn nonempty_total(&self) -> Result<u64> {
        match self.total() {
            0 => Err(Error::arg("confusion matrix is empty")),
            t => Ok(t),
        }
    }

    /// Precision, recall and F1 per class. A ratio with a zero denominator
    /// is reported as 0.
    pub fn per_class(&self) -> Vec<ClassScores> {
        let support = self.support();
        let predicted = self.predicted_counts();
        (0..self.classes)
            .map(|c| {
                let tp = self.get(c, c) as f64;
                let ratio = |den: u64| if den == 0 { 0.0 } else { tp / den as f64 };
                let precision = ratio(predicted[c]);
                let recall = ratio(support[c]);
                let f1 = if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                };
                ClassScores {
                    precision,
                    recall,
                    f1,
                    support: support[c],
                }
            })
            .collect()
    }

    pub fn weighted_f1(&self) -> Result<f64> {
        weighted_f1(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

pub fn confusion(y_true: &[usize], y_pred: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Dimension {
            context: "prediction count",
            expected: y_true.len(),
            found: y_pred.len(),
        });
    }
    let mut cm = ConfusionMatrix::new(classes);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        cm.add(t, p)?;
    }
    Ok(cm)
}

/// Per-class F1 averaged with weights proportional to true-class support.
pub fn weighted_f1(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.nonempty_total()? as f64;
    Ok(cm
        .per_class()
        .iter()
        .map(|s| s.f1 * s.support as f64 / total)
        .sum())
}

/// Scores of one prediction run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub weighted_f1: f64,
    pub accuracy: f64,
    pub per_class: Vec<ClassScores>,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    pub fn from_predictions(y_true: &[usize], y_pred: &[usize], classes: usize) -> Result<Self> {
        let cm = confusion(y_true, y_pred, classes)?;
        Ok(Self {
            weighted_f1: weighted_f1(&cm)?,
            accuracy: cm.accuracy()?,
            per_class: cm.per_class(),
            confusion: cm,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 2, 1];
        let cm = confusion(&y, &y, 3).unwrap();
        for t in 0..3 {
            for p in 0..3 {
                assert_eq!(cm.get(t, p) > 0, t == p);
            }
        }
        assert_eq!(weighted_f1(&cm).unwrap(), 1.0);
        assert_eq!(cm.accuracy().unwrap(), 1.0);
    }

    #[test]
    fn swapped_pair_is_antidiagonal() {
        let cm = confusion(&[0, 1], &[1, 0], 2).unwrap();
        assert_eq!(
            (cm.get(0, 0), cm.get(0, 1), cm.get(1, 0), cm.get(1, 1)),
            (0, 1, 1, 0)
        );
        assert_eq!(weighted_f1(&cm).unwrap(), 0.0);
    }

    #[test]
    fn constant_predictor_on_balanced_data() {
        let cm = confusion(&[0, 0, 1, 1], &[0, 0, 0, 0], 2).unwrap();
        let f1 = weighted_f1(&cm).unwrap();
        assert!((f1 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_supported_class() {
        let cm = confusion(&[1, 1, 1], &[1, 1, 1], 3).unwrap();
        assert_eq!(weighted_f1(&cm).unwrap(), 1.0);
    }

    #[test]
    fn errors() {
        assert!(confusion(&[0], &[0, 1], 2).is_err());
        assert!(confusion(&[0], &[2], 2).is_err());
        assert!(weighted_f1(&ConfusionMatrix::new(2)).is_err());
    }

    #[test]
    fn matches_tally_oracle() {
        let mut rng = seed::rng(8);
        let t: Vec<usize> = (0..200).map(|_| rng.random_range(0..4)).collect();
        let p: Vec<usize> = (0..200).map(|_| rng.random_range(0..4)).collect();
        let cm = confusion(&t, &p, 4).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let n = t.iter().zip(&p).filter(|&(&x, &y)| x == a && y == b).count();
                assert_eq!(cm.get(a, b), n as u64);
            }
        }
        assert_eq!(cm.total(), 200);
    }

    fn random_labels(s: u64, len: usize, c: usize) -> (Vec<usize>, Vec<usize>) {
        let mut rng = seed::rng(s);
        let t = (0..len).map(|_| rng.random_range(0..c)).collect();
        let p = (0..len).map(|_| rng.random_range(0..c)).collect();
        (t, p)
    }

    proptest! {
        #[test]
        fn f1_bounds_and_accuracy_identity(s in any::<u64>(), len in 1usize..100, c in 2usize..6) {
            let (t, p) = random_labels(s, len, c);
            let report = EvalReport::from_predictions(&t, &p, c).unwrap();
            prop_assert!((0.0..=1.0).contains(&report.weighted_f1));
            let cm = &report.confusion;
            let diagonal = (0..c).all(|a| (0..c).all(|b| a == b || cm.get(a, b) == 0));
            prop_assert_eq!(report.weighted_f1 == 1.0, diagonal);
            let weighted_recall: f64 = report
                .per_class
                .iter()
                .map(|s| s.recall * s.support as f64 / len as f64)
                .sum();
            prop_assert!((weighted_recall - report.accuracy).abs() < 1e-12);
        }

        #[test]
        fn f1_invariant_under_relabeling(s in any::<u64>(), len in 1usize..60, c in 2usize..6) {
            let (t, p) = random_labels(s, len, c);
            let relabel = |y: &Vec<usize>| y.iter().map(|&v| (v + 1) % c).collect::<Vec<_>>();
            let a = weighted_f1(&confusion(&t, &p, c).unwrap()).unwrap();
            let b = weighted_f1(&confusion(&relabel(&t), &relabel(&p), c).unwrap()).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
