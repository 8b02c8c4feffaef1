//! Multiclass AdaBoost (SAMME) over depth-limited trees.
//!
//! Round t fits a tree on the current sample weights, measures its weighted
//! error `err`, and gets weight `α = η · (ln((1 − err)/err) + ln(K − 1))` with
//! `K = 3`. Misclassified rows are multiplied by `exp(α)` and the weights are
//! renormalized. Boosting stops early when a tree is perfect (it joins the
//! ensemble with weight 1) or no better than chance (`err ≥ 1 − 1/K`, the
//! tree is discarded). When every α is zero the ensemble falls back to the
//! training class priors.

use serde::{Deserialize, Serialize};

use super::tree::{self, DecisionTree, SplitCriterion};
use super::{argmax, Samples, Scores};
use crate::pipeline::SeverityClass;

const N_CLASSES: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostParams {
    pub n_learners: usize,
    pub max_splits: usize,
    pub learning_rate: f64,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            n_learners: 30,
            max_splits: 20,
            learning_rate: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    PerfectLearner,
    NoBetterThanChance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoost {
    pub learners: Vec<(f64, DecisionTree)>,
    pub errors: Vec<f64>,
    pub priors: Scores,
    pub stop: StopReason,
}

/// Trains the ensemble and returns the sample-weight vector in force after
/// every completed round.
pub fn train_adaboost_traced(train: &Samples, params: &BoostParams) -> (AdaBoost, Vec<Vec<f64>>) {
    let n = train.len();
    let counts = train.class_counts();
    let priors = counts.map(|c| c as f64 / n as f64);
    let mut w = vec![1.0 / n as f64; n];
    let mut trace = Vec::new();
    let mut learners = Vec::new();
    let mut errors = Vec::new();
    let mut stop = StopReason::Completed;

    for _ in 0..params.n_learners {
        let t = tree::grow(train, (0..n).collect(), &w, params.max_splits, SplitCriterion::Gini);
        let missed: Vec<bool> = (0..n).map(|i| t.predict(train.row(i)) != train.label(i)).collect();
        let total: f64 = w.iter().sum();
        let err = w.iter().zip(&missed).filter(|(_, m)| **m).map(|(w, _)| w).sum::<f64>() / total;
        errors.push(err);
        if err <= 0.0 {
            learners.push((1.0, t));
            stop = StopReason::PerfectLearner;
            break;
        }
        if err >= 1.0 - 1.0 / N_CLASSES {
            stop = StopReason::NoBetterThanChance;
            break;
        }
        let alpha = params.learning_rate * (((1.0 - err) / err).ln() + (N_CLASSES - 1.0).ln());
        let boost = alpha.exp();
        for (wi, m) in w.iter_mut().zip(&missed) {
            if *m {
                *wi *= boost;
            }
        }
        let sum: f64 = w.iter().sum();
        w.iter_mut().for_each(|wi| *wi /= sum);
        trace.push(w.clone());
        learners.push((alpha, t));
    }

    (
        AdaBoost {
            learners,
            errors,
            priors,
            stop,
        },
        trace,
    )
}

pub fn train_adaboost(train: &Samples, params: &BoostParams) -> AdaBoost {
    train_adaboost_traced(train, params).0
}

impl AdaBoost {
    /// α-weighted vote shares, or the class priors when no learner carries weight.
    pub fn scores(&self, x: &[f64]) -> Scores {
        let mut votes = [0.0; 3];
        for (alpha, t) in &self.learners {
            votes[t.predict(x).index()] += alpha;
        }
        let total: f64 = votes.iter().sum();
        if total > 0.0 {
            votes.map(|v| v / total)
        } else {
            self.priors
        }
    }

    pub fn predict(&self, x: &[f64]) -> SeverityClass {
        argmax(&self.scores(x))
    }
}
