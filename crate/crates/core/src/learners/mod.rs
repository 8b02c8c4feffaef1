//! The six classifiers, behind one train/predict contract.
//!
//! Every learner works on a dense [`Samples`] matrix and predicts one of the
//! three severity classes together with a class-score triple. Trees, naive
//! Bayes and boosting see raw features; SVM and KNN z-score features with
//! statistics fitted on the training rows only.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::pipeline::{Dataset, FeatureVector, SeverityClass};
use crate::{Error, Result};

pub mod bagged;
pub mod boost;
pub mod knn;
pub mod naive_bayes;
pub mod svm;
pub mod tree;

pub use bagged::{BaggedParams, BaggedTrees};
pub use boost::{AdaBoost, BoostParams};
pub use knn::{DistanceWeighting, KnnModel, KnnParams};
pub use naive_bayes::{GaussianNb, NbLikelihood, NbParams};
pub use svm::{SvmModel, SvmParams};
pub use tree::{DecisionTree, SplitCriterion, TreeNode, TreeParams};

/// Per-class scores, indexed by [`SeverityClass::index`].
pub type Scores = [f64; 3];

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Dense row-major feature matrix with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    n_features: usize,
    x: Vec<f64>,
    y: Vec<SeverityClass>,
}

impl Samples {
    pub fn new(rows: Vec<Vec<f64>>, y: Vec<SeverityClass>) -> Result<Self> {
        if rows.len() != y.len() {
            return Err(Error::Data(format!("{} rows but {} labels", rows.len(), y.len())));
        }
        let n_features = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_features) {
            return Err(Error::Data("rows have differing feature counts".into()));
        }
        let x: Vec<f64> = rows.into_iter().flatten().collect();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite feature value".into()));
        }
        Ok(Samples { n_features, x, y })
    }

    pub fn from_dataset(d: &Dataset) -> Self {
        Samples {
            n_features: crate::pipeline::N_FEATURES,
            x: d.rows().iter().flat_map(|(f, _)| f.to_array()).collect(),
            y: d.labels(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn label(&self, i: usize) -> SeverityClass {
        self.y[i]
    }

    pub fn labels(&self) -> &[SeverityClass] {
        &self.y
    }

    pub fn class_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for y in &self.y {
            c[y.index()] += 1;
        }
        c
    }

    pub fn subset(&self, indices: &[usize]) -> Samples {
        Samples {
            n_features: self.n_features,
            x: indices.iter().flat_map(|&i| self.row(i).iter().copied()).collect(),
            y: indices.iter().map(|&i| self.y[i]).collect(),
        }
    }
}

/// Argmax over a score triple; ties go to the lowest class.
pub fn argmax(scores: &Scores) -> SeverityClass {
    let mut best = 0;
    for i in 1..3 {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    SeverityClass::ALL[best]
}

/// Per-feature z-score constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Mean and sample standard deviation of each column. Constant columns
    /// get scale 1.
    pub fn fit(samples: &Samples) -> Self {
        let (n, d) = (samples.len(), samples.n_features());
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(samples.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n.max(1) as f64);
        let mut var = vec![0.0; d];
        for i in 0..n {
            for ((s, v), m) in var.iter_mut().zip(samples.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = if n > 1 { (s / (n - 1) as f64).sqrt() } else { 0.0 };
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn transform_all(&self, samples: &Samples) -> Samples {
        Samples {
            n_features: samples.n_features,
            x: (0..samples.len())
                .flat_map(|i| self.transform(samples.row(i)))
                .collect(),
            y: samples.y.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    DecisionTree,
    NaiveBayes,
    Svm,
    Knn,
    BoostedTrees,
    BaggedTrees,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::DecisionTree,
        ModelKind::NaiveBayes,
        ModelKind::Svm,
        ModelKind::Knn,
        ModelKind::BoostedTrees,
        ModelKind::BaggedTrees,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::DecisionTree => "tree",
            ModelKind::NaiveBayes => "nb",
            ModelKind::Svm => "svm",
            ModelKind::Knn => "knn",
            ModelKind::BoostedTrees => "boosted",
            ModelKind::BaggedTrees => "bagged",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tree" | "decision_tree" => Ok(ModelKind::DecisionTree),
            "nb" | "naive_bayes" => Ok(ModelKind::NaiveBayes),
            "svm" => Ok(ModelKind::Svm),
            "knn" => Ok(ModelKind::Knn),
            "boosted" | "boosted_trees" | "adaboost" => Ok(ModelKind::BoostedTrees),
            "bagged" | "bagged_trees" => Ok(ModelKind::BaggedTrees),
            _ => Err(Error::Config(format!(
                "unknown model '{s}' (expected tree, nb, svm, knn, boosted or bagged)"
            ))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Hyperparameters, tagged by model kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_kind", rename_all = "snake_case")]
pub enum ModelParams {
    DecisionTree(TreeParams),
    NaiveBayes(NbParams),
    Svm(SvmParams),
    Knn(KnnParams),
    BoostedTrees(BoostParams),
    BaggedTrees(BaggedParams),
}

impl ModelParams {
    pub fn defaults(kind: ModelKind) -> Self {
        match kind {
            ModelKind::DecisionTree => ModelParams::DecisionTree(TreeParams::default()),
            ModelKind::NaiveBayes => ModelParams::NaiveBayes(NbParams::default()),
            ModelKind::Svm => ModelParams::Svm(SvmParams::default()),
            ModelKind::Knn => ModelParams::Knn(KnnParams::default()),
            ModelKind::BoostedTrees => ModelParams::BoostedTrees(BoostParams::default()),
            ModelKind::BaggedTrees => ModelParams::BaggedTrees(BaggedParams::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::DecisionTree(_) => ModelKind::DecisionTree,
            ModelParams::NaiveBayes(_) => ModelKind::NaiveBayes,
            ModelParams::Svm(_) => ModelKind::Svm,
            ModelParams::Knn(_) => ModelKind::Knn,
            ModelParams::BoostedTrees(_) => ModelKind::BoostedTrees,
            ModelParams::BaggedTrees(_) => ModelKind::BaggedTrees,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        match self {
            ModelParams::DecisionTree(_) | ModelParams::NaiveBayes(_) => Ok(()),
            ModelParams::Svm(p) => {
                positive(p.kernel_scale, "kernel_scale")?;
                positive(p.box_constraint, "box_constraint")?;
                positive(p.tolerance, "tolerance")
            }
            ModelParams::Knn(p) if p.k == 0 => Err(Error::Config("k must be at least 1".into())),
            ModelParams::Knn(_) => Ok(()),
            ModelParams::BoostedTrees(p) => {
                if p.n_learners == 0 {
                    return Err(Error::Config("n_learners must be at least 1".into()));
                }
                if !(0.0..=1.0).contains(&p.learning_rate) {
                    return Err(Error::Config(format!(
                        "learning_rate must lie in [0, 1], got {}",
                        p.learning_rate
                    )));
                }
                Ok(())
            }
            ModelParams::BaggedTrees(p) if p.n_learners == 0 => {
                Err(Error::Config("n_learners must be at least 1".into()))
            }
            ModelParams::BaggedTrees(_) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedState {
    DecisionTree(DecisionTree),
    NaiveBayes(GaussianNb),
    Svm(SvmModel),
    Knn(KnnModel),
    BoostedTrees(AdaBoost),
    BaggedTrees(BaggedTrees),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub n_train: usize,
    pub class_counts: [usize; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_fingerprint: Option<String>,
}

/// A fitted classifier and everything needed to reproduce its predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub params: ModelParams,
    pub n_features: usize,
    pub state: FittedState,
    pub metadata: TrainingMetadata,
}

/// Fits `params` on `data`. `seed` drives every random choice the learner makes.
pub fn train(params: &ModelParams, data: &Samples, seed: u64) -> Result<TrainedModel> {
    params.validate()?;
    if data.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    let state = match params {
        ModelParams::DecisionTree(p) => FittedState::DecisionTree(tree::train_tree(data, p.max_splits, p.criterion)),
        ModelParams::NaiveBayes(p) => FittedState::NaiveBayes(naive_bayes::train_gaussian_nb(data, p)?),
        ModelParams::Svm(p) => FittedState::Svm(svm::train_svm(data, p)?),
        ModelParams::Knn(p) => FittedState::Knn(knn::train_knn(data, p)?),
        ModelParams::BoostedTrees(p) => FittedState::BoostedTrees(boost::train_adaboost(data, p)),
        ModelParams::BaggedTrees(p) => FittedState::BaggedTrees(bagged::train_bagged(data, p, seed)),
    };
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        params: params.clone(),
        n_features: data.n_features(),
        state,
        metadata: TrainingMetadata {
            seed,
            n_train: data.len(),
            class_counts: data.class_counts(),
            dataset_fingerprint: None,
        },
    })
}

impl TrainedModel {
    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::Data(format!(
                "model expects {} features, got {}",
                self.n_features,
                x.len()
            )));
        }
        Ok(())
    }

    /// Class scores; probabilities for tree, NB and bagging, normalized votes
    /// for SVM and boosting, normalized neighbour weights for KNN.
    pub fn predict_scores(&self, x: &[f64]) -> Result<Scores> {
        self.check(x)?;
        Ok(match &self.state {
            FittedState::DecisionTree(t) => t.predict_distribution(x),
            FittedState::NaiveBayes(m) => m.predict_proba(x),
            FittedState::Svm(m) => m.vote_fractions(x),
            FittedState::Knn(m) => m.scores(x),
            FittedState::BoostedTrees(m) => m.scores(x),
            FittedState::BaggedTrees(m) => m.mean_distribution(x),
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<SeverityClass> {
        self.check(x)?;
        Ok(match &self.state {
            FittedState::DecisionTree(t) => t.predict(x),
            FittedState::NaiveBayes(m) => m.predict(x),
            FittedState::Svm(m) => m.predict(x),
            FittedState::Knn(m) => m.predict(x),
            FittedState::BoostedTrees(m) => m.predict(x),
            FittedState::BaggedTrees(m) => m.predict(x),
        })
    }

    pub fn predict_features(&self, f: &FeatureVector) -> Result<SeverityClass> {
        self.predict(&f.to_array())
    }

    pub fn predict_all(&self, data: &Samples) -> Result<Vec<SeverityClass>> {
        (0..data.len()).map(|i| self.predict(data.row(i))).collect()
    }

    pub fn kind(&self) -> ModelKind {
        self.params.kind()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: TrainedModel = serde_json::from_str(s)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                m.format_version
            )));
        }
        if m.params.kind() != state_kind(&m.state) {
            return Err(Error::Format("model_kind does not match fitted state".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

fn state_kind(s: &FittedState) -> ModelKind {
    match s {
        FittedState::DecisionTree(_) => ModelKind::DecisionTree,
        FittedState::NaiveBayes(_) => ModelKind::NaiveBayes,
        FittedState::Svm(_) => ModelKind::Svm,
        FittedState::Knn(_) => ModelKind::Knn,
        FittedState::BoostedTrees(_) => ModelKind::BoostedTrees,
        FittedState::BaggedTrees(_) => ModelKind::BaggedTrees,
    }
}

/// Estimator wrapper: holds hyperparameters and, once fitted, the model.
#[derive(Debug, Clone)]
pub struct Classifier {
    params: ModelParams,
    fitted: Option<TrainedModel>,
}

impl Classifier {
    pub fn new(params: ModelParams) -> Self {
        Classifier { params, fitted: None }
    }

    pub fn fit(&mut self, data: &Samples, seed: u64) -> Result<&TrainedModel> {
        Ok(self.fitted.insert(train(&self.params, data, seed)?))
    }

    pub fn model(&self) -> Result<&TrainedModel> {
        self.fitted
            .as_ref()
            .ok_or_else(|| Error::Data(format!("{} model has not been fitted", self.params.kind())))
    }

    pub fn predict(&self, x: &[f64]) -> Result<SeverityClass> {
        self.model()?.predict(x)
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    /// Three Gaussian blobs in `d` dimensions centred `sep` apart.
    pub fn blobs(n_per_class: usize, d: usize, sep: f64, seed: u64) -> Samples {
        let mut rng = crate::seed::rng(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for c in SeverityClass::ALL {
            for _ in 0..n_per_class {
                let row: Vec<f64> = (0..d)
                    .map(|j| normal.sample(&mut rng) + if j == c.index() % d { sep } else { 0.0 })
                    .collect();
                rows.push(row);
                y.push(c);
            }
        }
        Samples::new(rows, y).unwrap()
    }

    pub fn uniform(n: usize, d: usize, seed: u64) -> Samples {
        let mut rng = crate::seed::rng(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let y = (0..n).map(|_| SeverityClass::ALL[rng.gen_range(0..3)]).collect();
        Samples::new(rows, y).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::blobs;
    use super::*;

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.3, 0.4, 0.3]), SeverityClass::Moderate);
        assert_eq!(argmax(&[0.5, 0.5, 0.0]), SeverityClass::Weak);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), SeverityClass::Moderate);
    }

    #[test]
    fn unfitted_classifier_errors() {
        let c = Classifier::new(ModelParams::defaults(ModelKind::Knn));
        assert!(c.predict(&[0.0; 7]).is_err());
    }

    #[test]
    fn every_kind_round_trips_through_json() {
        let data = blobs(15, 3, 4.0, 9);
        for kind in ModelKind::ALL {
            let mut params = ModelParams::defaults(kind);
            if let ModelParams::BaggedTrees(p) = &mut params {
                p.n_learners = 5;
            }
            let mut c = Classifier::new(params);
            let model = c.fit(&data, 42).unwrap().clone();
            let back = TrainedModel::from_json(&model.to_json().unwrap()).unwrap();
            assert_eq!(back, model, "{kind}");
            for i in 0..data.len() {
                assert_eq!(back.predict(data.row(i)).unwrap(), model.predict(data.row(i)).unwrap());
                assert_eq!(
                    back.predict_scores(data.row(i)).unwrap(),
                    model.predict_scores(data.row(i)).unwrap()
                );
            }
            assert_eq!(c.predict(data.row(0)).unwrap(), model.predict(data.row(0)).unwrap());
        }
    }

    #[test]
    fn scores_are_non_negative() {
        let data = blobs(20, 3, 1.0, 3);
        for kind in ModelKind::ALL {
            let model = train(&ModelParams::defaults(kind), &data, 1).unwrap();
            for i in 0..data.len() {
                let s = model.predict_scores(data.row(i)).unwrap();
                assert!(s.iter().all(|v| *v >= 0.0 && v.is_finite()), "{kind}: {s:?}");
            }
        }
    }

    #[test]
    fn wrong_dimension_rejected() {
        let data = blobs(5, 3, 4.0, 9);
        let model = train(&ModelParams::defaults(ModelKind::DecisionTree), &data, 0).unwrap();
        assert!(model.predict(&[0.0; 2]).is_err());
    }

    #[test]
    fn standardizer_uses_training_rows_only() {
        let data = blobs(30, 2, 3.0, 4);
        let train_idx: Vec<usize> = (0..data.len()).filter(|i| i % 3 != 0).collect();
        let train_set = data.subset(&train_idx);
        let model = train(&ModelParams::defaults(ModelKind::Knn), &train_set, 0).unwrap();
        let FittedState::Knn(knn) = &model.state else {
            unreachable!()
        };
        assert_eq!(knn.standardizer.as_ref().unwrap(), &Standardizer::fit(&train_set));
        assert_ne!(knn.standardizer.as_ref().unwrap(), &Standardizer::fit(&data));
    }

    #[test]
    fn kind_parsing() {
        for kind in ModelKind::ALL {
            assert_eq!(kind.name().parse::<ModelKind>().unwrap(), kind);
        }
        assert!("forest".parse::<ModelKind>().is_err());
    }
}
