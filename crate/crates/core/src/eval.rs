//! Train-and-score loops over a split plan.

use serde::{Deserialize, Serialize};

use crate::learners::{self, ModelParams, Samples};
use crate::metrics::{self, ConfusionMatrix, CvReport};
use crate::pipeline::{split_indices, SplitPlan};
use crate::{seed, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub plan: SplitPlan,
    pub folds: Vec<ConfusionMatrix>,
    pub report: CvReport,
}

impl Evaluation {
    pub fn accuracy(&self) -> f64 {
        self.report.summary.accuracy
    }
}

/// Trains `params` on each training side of `plan` and scores the held-out
/// side. Fold `f` trains with `seed::derive_indexed(seed, "fold", f)`.
pub fn cross_validate(data: &Samples, params: &ModelParams, plan: &SplitPlan, seed: u64) -> Result<Evaluation> {
    let splits = split_indices(data.labels(), plan)?;
    let mut folds = Vec::with_capacity(splits.len());
    for (f, (train, validation)) in splits.iter().enumerate() {
        let model = learners::train(
            params,
            &data.subset(train),
            seed::derive_indexed(seed, "fold", f as u64),
        )?;
        let held = data.subset(validation);
        let predicted = model.predict_all(&held)?;
        folds.push(metrics::accumulate(&predicted, held.labels())?);
    }
    let report = metrics::aggregate_cv(&folds)?;
    Ok(Evaluation {
        plan: *plan,
        folds,
        report,
    })
}
