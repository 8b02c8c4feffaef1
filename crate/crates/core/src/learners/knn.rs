//! Distance-weighted k-nearest neighbours.

use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::{argmax, Samples, Scores, Standardizer};
use crate::pipeline::SeverityClass;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DistanceWeighting {
    Equal,
    Inverse,
    #[default]
    SquaredInverse,
}

impl DistanceWeighting {
    fn weight(self, d2: f64) -> f64 {
        match self {
            DistanceWeighting::Equal => 1.0,
            DistanceWeighting::Inverse => 1.0 / d2.sqrt(),
            DistanceWeighting::SquaredInverse => 1.0 / d2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnnParams {
    pub k: usize,
    #[serde(default)]
    pub weighting: DistanceWeighting,
    pub standardize: bool,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams {
            k: 10,
            weighting: DistanceWeighting::SquaredInverse,
            standardize: true,
        }
    }
}

/// Stored exemplars (standardized when enabled) and their labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub weighting: DistanceWeighting,
    pub standardizer: Option<Standardizer>,
    pub exemplars: Vec<Vec<f64>>,
    pub labels: Vec<SeverityClass>,
}

pub fn train_knn(train: &Samples, params: &KnnParams) -> Result<KnnModel> {
    if params.k == 0 || params.k > train.len() {
        return Err(Error::Data(format!(
            "k = {} must lie in [1, {}] (training size)",
            params.k,
            train.len()
        )));
    }
    let standardizer = params.standardize.then(|| Standardizer::fit(train));
    let exemplars = (0..train.len())
        .map(|i| match &standardizer {
            Some(s) => s.transform(train.row(i)),
            None => train.row(i).to_vec(),
        })
        .collect();
    Ok(KnnModel {
        k: params.k,
        weighting: params.weighting,
        standardizer,
        exemplars,
        labels: train.labels().to_vec(),
    })
}

/// Heap entry ordered by (squared distance, exemplar index).
#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Class scores from `(squared distance, class)` neighbours. Any neighbour at
/// distance zero makes the zero-distance neighbours the only voters.
pub fn weighted_scores(neighbours: &[(f64, SeverityClass)], weighting: DistanceWeighting) -> Scores {
    let mut scores = [0.0; 3];
    if neighbours.iter().any(|(d2, _)| *d2 == 0.0) {
        for (_, c) in neighbours.iter().filter(|(d2, _)| *d2 == 0.0) {
            scores[c.index()] += 1.0;
        }
    } else {
        for (d2, c) in neighbours {
            scores[c.index()] += weighting.weight(*d2);
        }
    }
    scores
}

impl KnnModel {
    /// The k nearest exemplars as `(squared distance, index)`, nearest first;
    /// equal distances resolve to the lower index.
    pub fn neighbours(&self, x: &[f64]) -> Vec<(f64, usize)> {
        let z = match &self.standardizer {
            Some(s) => s.transform(x),
            None => x.to_vec(),
        };
        let mut heap: BinaryHeap<Entry> = BinaryHeap::with_capacity(self.k + 1);
        for (i, e) in self.exemplars.iter().enumerate() {
            let d2: f64 = e.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum();
            let entry = Entry(d2, i);
            if heap.len() < self.k {
                heap.push(entry);
            } else if entry < *heap.peek().expect("k >= 1") {
                heap.pop();
                heap.push(entry);
            }
        }
        heap.into_sorted_vec().into_iter().map(|Entry(d2, i)| (d2, i)).collect()
    }

    pub fn raw_scores(&self, x: &[f64]) -> Scores {
        let nb: Vec<(f64, SeverityClass)> = self
            .neighbours(x)
            .into_iter()
            .map(|(d2, i)| (d2, self.labels[i]))
            .collect();
        weighted_scores(&nb, self.weighting)
    }

    /// Raw scores normalized to sum to one.
    pub fn scores(&self, x: &[f64]) -> Scores {
        let s = self.raw_scores(x);
        let total: f64 = s.iter().sum();
        s.map(|v| v / total)
    }

    pub fn predict(&self, x: &[f64]) -> SeverityClass {
        argmax(&self.raw_scores(x))
    }
}
