//! Naive Bayes with per-feature normal class-conditional likelihoods.

use serde::{Deserialize, Serialize};

use super::{argmax, Samples, Scores};
use crate::pipeline::SeverityClass;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NbLikelihood {
    #[default]
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NbParams {
    #[serde(default)]
    pub likelihood: NbLikelihood,
    /// Class variances are clamped below at this multiple of the feature's
    /// variance over the whole training set.
    pub variance_floor: f64,
}

impl Default for NbParams {
    fn default() -> Self {
        NbParams {
            likelihood: NbLikelihood::Gaussian,
            variance_floor: 1e-9,
        }
    }
}

/// Per-class priors, means and variances. Classes absent from training have
/// prior 0 and empty statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    pub priors: [f64; 3],
    pub means: [Vec<f64>; 3],
    pub variances: [Vec<f64>; 3],
}

/// Fits class means and unbiased variances. A class present with a single
/// row has no variance estimate and is rejected.
pub fn train_gaussian_nb(train: &Samples, params: &NbParams) -> Result<GaussianNb> {
    let (n, d) = (train.len(), train.n_features());
    let counts = train.class_counts();
    for c in SeverityClass::ALL {
        if counts[c.index()] == 1 {
            return Err(Error::Data(format!(
                "naive Bayes needs at least 2 rows of class {c}, got 1"
            )));
        }
    }

    let mut global_mean = vec![0.0; d];
    let mut means: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; d]);
    for i in 0..n {
        let c = train.label(i).index();
        for (j, v) in train.row(i).iter().enumerate() {
            means[c][j] += v;
            global_mean[j] += v;
        }
    }
    global_mean.iter_mut().for_each(|m| *m /= n as f64);
    for c in 0..3 {
        if counts[c] > 0 {
            means[c].iter_mut().for_each(|m| *m /= counts[c] as f64);
        }
    }

    let mut global_var = vec![0.0; d];
    let mut variances: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; d]);
    for i in 0..n {
        let c = train.label(i).index();
        for (j, v) in train.row(i).iter().enumerate() {
            variances[c][j] += (v - means[c][j]).powi(2);
            global_var[j] += (v - global_mean[j]).powi(2);
        }
    }
    for c in 0..3 {
        for (j, v) in variances[c].iter_mut().enumerate() {
            let floor = if global_var[j] > 0.0 {
                params.variance_floor * global_var[j] / n as f64
            } else {
                // constant feature: any positive value cancels across classes
                params.variance_floor
            };
            *v = if counts[c] > 1 {
                (*v / (counts[c] - 1) as f64).max(floor)
            } else {
                floor
            };
        }
    }
    for c in 0..3 {
        if counts[c] == 0 {
            means[c].clear();
            variances[c].clear();
        }
    }

    Ok(GaussianNb {
        priors: counts.map(|k| k as f64 / n as f64),
        means,
        variances,
    })
}

impl GaussianNb {
    /// `ln P(c) + Σ_j ln N(x_j; μ_cj, σ²_cj)`; `-inf` for absent classes.
    pub fn joint_log_likelihood(&self, x: &[f64]) -> Scores {
        std::array::from_fn(|c| {
            if self.priors[c] == 0.0 {
                return f64::NEG_INFINITY;
            }
            let ll: f64 = x
                .iter()
                .zip(&self.means[c])
                .zip(&self.variances[c])
                .map(|((v, m), s2)| -0.5 * (2.0 * std::f64::consts::PI * s2).ln() - (v - m).powi(2) / (2.0 * s2))
                .sum();
            self.priors[c].ln() + ll
        })
    }

    /// Normalized log posterior, `joint - logsumexp(joint)`.
    pub fn log_posterior(&self, x: &[f64]) -> Scores {
        let jll = self.joint_log_likelihood(x);
        let max = jll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + jll.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        jll.map(|v| v - lse)
    }

    pub fn predict_proba(&self, x: &[f64]) -> Scores {
        self.log_posterior(x).map(f64::exp)
    }

    pub fn predict(&self, x: &[f64]) -> SeverityClass {
        argmax(&self.joint_log_likelihood(x))
    }
}
