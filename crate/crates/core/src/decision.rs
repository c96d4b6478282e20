//! Fusion of member posteriors into a single label.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::forest::ForestModel;
use crate::linalg::{argmax, Matrix};

pub const DEFAULT_VOTE_THRESHOLD: f64 = 0.5;

const ROW_SUM_TOL: f64 = 1e-6;
const PRIOR_SUM_TOL: f64 = 1e-9;
/// Posterior entries this close to the maximum count as tied, so rounding in
/// the weighted sum cannot override the lowest-index rule.
pub const POSTERIOR_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecisionStrategy {
    /// Members whose top probability exceeds `threshold` vote for their top
    /// class; the plurality wins.
    MajorityVote { threshold: f64 },
    /// Plain average of member posteriors.
    Equiprobable,
    /// Member posteriors averaged with inverse-eigenvalue priors.
    WeightedProbability,
}

impl DecisionStrategy {
    pub fn vote() -> Self {
        DecisionStrategy::MajorityVote {
            threshold: DEFAULT_VOTE_THRESHOLD,
        }
    }

    /// Stable identifier used in reports and configuration.
    pub fn name(&self) -> &'static str {
        match self {
            DecisionStrategy::MajorityVote { .. } => "vote",
            DecisionStrategy::Equiprobable => "equiprobable",
            DecisionStrategy::WeightedProbability => "weighted",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DecisionStrategy::MajorityVote { threshold } if !(threshold > 0.0 && threshold < 1.0) => {
                Err(Error::Config(format!(
                    "vote threshold must lie in (0, 1), got {threshold}"
                )))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for DecisionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DecisionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "vote" | "majority" | "majority_vote" => Ok(Self::vote()),
            "equiprobable" | "equi" => Ok(DecisionStrategy::Equiprobable),
            "weighted" | "weighted_probability" => Ok(DecisionStrategy::WeightedProbability),
            other => Err(Error::Config(format!(
                "unknown strategy {other:?} (expected vote, equiprobable or weighted)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub label: usize,
    /// Fused class distribution, when the rule produced one.
    pub posterior: Option<Vec<f64>>,
    /// Per member: the class it voted for, or `None` if rejected.
    pub votes: Option<Vec<Option<usize>>>,
    /// Voting found no winner and fell back to equiprobable averaging.
    pub fallback_used: bool,
}

fn check_rows(probs: &Matrix) -> Result<()> {
    if probs.rows() == 0 || probs.cols() == 0 {
        return Err(Error::arg("empty probability matrix"));
    }
    for (j, row) in probs.row_iter().enumerate() {
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > ROW_SUM_TOL || row.iter().any(|&p| p < 0.0) {
            return Err(Error::arg(format!(
                "member {j} row is not a probability vector (sum {s})"
            )));
        }
    }
    Ok(())
}

/// Confidence-filtered plurality vote.
///
/// Member `j` votes for `argmax(row j)` only if `max(row j) > threshold`.
/// With no votes cast, or a tie between the leading classes, the decision
/// falls back to the equiprobable average over all members.
pub fn vote_decide(probs: &Matrix, threshold: f64) -> Result<Decision> {
    check_rows(probs)?;
    let votes: Vec<Option<usize>> = probs
        .row_iter()
        .map(|row| {
            let c = argmax(row);
            (row[c] > threshold).then_some(c)
        })
        .collect();
    let mut tally = vec![0usize; probs.cols()];
    for c in votes.iter().flatten() {
        tally[*c] += 1;
    }
    let top = tally.iter().copied().max().unwrap_or(0);
    let leaders = tally.iter().filter(|&&t| t == top).count();
    if top > 0 && leaders == 1 {
        let label = tally.iter().position(|&t| t == top).unwrap();
        return Ok(Decision {
            label,
            posterior: None,
            votes: Some(votes),
            fallback_used: false,
        });
    }
    let uniform = vec![1.0 / probs.rows() as f64; probs.rows()];
    let mut d = prob_decide(probs, &uniform)?;
    d.votes = Some(votes);
    d.fallback_used = true;
    Ok(d)
}

/// Mixture posterior `Σ_j priors[j] · probs[j]` and its argmax. Classes
/// within [`POSTERIOR_TIE_TOL`] of the maximum tie; the lowest index wins.
pub fn prob_decide(probs: &Matrix, priors: &[f64]) -> Result<Decision> {
    check_rows(probs)?;
    if priors.len() != probs.rows() {
        return Err(Error::Dimension {
            context: "prior count",
            expected: probs.rows(),
            found: priors.len(),
        });
    }
    let total: f64 = priors.iter().sum();
    if (total - 1.0).abs() > PRIOR_SUM_TOL || priors.iter().any(|&p| p < 0.0) {
        return Err(Error::arg(format!("priors must be a distribution (sum {total})")));
    }
    let mut posterior = vec![0.0; probs.cols()];
    for (row, &w) in probs.row_iter().zip(priors) {
        for (acc, p) in posterior.iter_mut().zip(row) {
            *acc += w * p;
        }
    }
    let top = posterior[argmax(&posterior)];
    let label = posterior
        .iter()
        .position(|&p| p >= top - POSTERIOR_TIE_TOL)
        .expect("maximum is present");
    Ok(Decision {
        label,
        posterior: Some(posterior),
        votes: None,
        fallback_used: false,
    })
}

/// Fuses already computed member posteriors for `forest` under `strategy`.
pub fn decide(forest: &ForestModel, probs: &Matrix, strategy: DecisionStrategy) -> Result<Decision> {
    match strategy {
        DecisionStrategy::MajorityVote { threshold } => {
            strategy.validate()?;
            vote_decide(probs, threshold)
        }
        DecisionStrategy::Equiprobable => prob_decide(probs, &forest.priors_equiprobable),
        DecisionStrategy::WeightedProbability => {
            let priors = forest.priors_weighted.as_ref().ok_or_else(|| {
                Error::Config(
                    "the weighted strategy needs a forest trained with whitening".into(),
                )
            })?;
            prob_decide(probs, priors)
        }
    }
}

/// Classifies one raw sample.
pub fn predict(forest: &ForestModel, x: &[f64], strategy: DecisionStrategy) -> Result<Decision> {
    if strategy == DecisionStrategy::WeightedProbability && !forest.is_whitened() {
        return Err(Error::Config(
            "the weighted strategy needs a forest trained with whitening".into(),
        ));
    }
    let probs = forest.member_probabilities(x)?;
    decide(forest, &probs, strategy)
}

/// Classifies every row of raw `x`.
pub fn predict_batch(
    forest: &ForestModel,
    x: &Matrix,
    strategy: DecisionStrategy,
) -> Result<Vec<Decision>> {
    if strategy == DecisionStrategy::WeightedProbability && !forest.is_whitened() {
        return Err(Error::Config(
            "the weighted strategy needs a forest trained with whitening".into(),
        ));
    }
    forest
        .member_probabilities_batch(x)?
        .iter()
        .map(|p| decide(forest, p, strategy))
        .collect()
}
