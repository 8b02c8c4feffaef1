//! Bootstrap-aggregated decision trees.
//!
//! Each member tree is grown on N rows drawn with replacement; member `m`
//! draws from its own stream seeded by `seed::derive_indexed(seed,
//! "bootstrap", m)`, so members train in parallel and the result does not
//! depend on scheduling. Predictions average the members' leaf
//! distributions.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{self, DecisionTree, SplitCriterion};
use super::{argmax, Samples, Scores};
use crate::pipeline::SeverityClass;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaggedParams {
    pub n_learners: usize,
    /// Split budget per tree; `None` means N − 1 (unrestricted).
    pub max_splits: Option<usize>,
    pub criterion: SplitCriterion,
    /// Resample each member. Disabling it trains every member on the rows as given.
    pub bootstrap: bool,
}

impl Default for BaggedParams {
    fn default() -> Self {
        BaggedParams {
            n_learners: 30,
            max_splits: None,
            criterion: SplitCriterion::Gini,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaggedTrees {
    pub trees: Vec<DecisionTree>,
}

/// Row indices of member `member`'s bootstrap sample.
pub fn bootstrap_indices(n: usize, seed: u64, member: usize) -> Vec<usize> {
    let mut rng = seed::rng(seed::derive_indexed(seed, "bootstrap", member as u64));
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

pub fn train_bagged(train: &Samples, params: &BaggedParams, seed: u64) -> BaggedTrees {
    let n = train.len();
    let max_splits = params.max_splits.unwrap_or(n.saturating_sub(1));
    let weights = vec![1.0; n];
    let trees = (0..params.n_learners)
        .into_par_iter()
        .map(|m| {
            let rows = if params.bootstrap {
                bootstrap_indices(n, seed, m)
            } else {
                (0..n).collect()
            };
            tree::grow(train, rows, &weights, max_splits, params.criterion)
        })
        .collect();
    BaggedTrees { trees }
}

impl BaggedTrees {
    pub fn mean_distribution(&self, x: &[f64]) -> Scores {
        let mut sum = [0.0; 3];
        for t in &self.trees {
            for (s, p) in sum.iter_mut().zip(t.leaf(x)) {
                *s += p;
            }
        }
        let k = self.trees.len() as f64;
        sum.map(|s| s / k)
    }

    pub fn predict(&self, x: &[f64]) -> SeverityClass {
        argmax(&self.mean_distribution(x))
    }
}
