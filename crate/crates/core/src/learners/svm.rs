//! Soft-margin SVM with a Gaussian kernel, trained by SMO.
//!
//! The binary solver follows the usual maximal-violating-pair scheme with
//! second-order working-set selection. It minimizes `½ αᵀQα − Σα` subject to
//! `0 ≤ α ≤ C` and `Σ αᵢyᵢ = 0`, and stops once the KKT violation gap drops
//! below `tolerance`. Three classes are handled one-vs-one with a majority
//! vote; ties go to the lowest class.

use serde::{Deserialize, Serialize};

use super::{argmax, Samples, Scores, Standardizer};
use crate::pipeline::SeverityClass;
use crate::{Error, Result};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    /// `s` in `K(a, b) = exp(-‖a − b‖² / s²)`.
    pub kernel_scale: f64,
    pub box_constraint: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub standardize: bool,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            kernel_scale: 0.66,
            box_constraint: 1.0,
            tolerance: 1e-3,
            max_iterations: 1_000_000,
            standardize: true,
        }
    }
}

pub fn gaussian_kernel(a: &[f64], b: &[f64], scale: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-d2 / (scale * scale)).exp()
}

/// One pairwise machine. `positive` is labelled +1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMachine {
    pub positive: SeverityClass,
    pub negative: SeverityClass,
    pub support_vectors: Vec<Vec<f64>>,
    /// Dual variables of the support vectors.
    pub alphas: Vec<f64>,
    /// ±1 labels of the support vectors.
    pub labels: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
}

impl BinaryMachine {
    pub fn decision(&self, x: &[f64], scale: f64) -> f64 {
        self.support_vectors
            .iter()
            .zip(self.alphas.iter().zip(&self.labels))
            .map(|(sv, (a, y))| a * y * gaussian_kernel(sv, x, scale))
            .sum::<f64>()
            - self.rho
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel_scale: f64,
    pub box_constraint: f64,
    pub standardizer: Option<Standardizer>,
    pub machines: Vec<BinaryMachine>,
}

/// Outcome of the binary dual solver.
#[derive(Debug, Clone)]
pub struct DualSolution {
    pub alphas: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
}

/// Solves the binary dual for rows `x` with labels `y ∈ {−1, +1}`.
pub fn solve_dual(x: &[&[f64]], y: &[f64], params: &SvmParams) -> Result<DualSolution> {
    let n = x.len();
    let c = params.box_constraint;
    let scale = params.kernel_scale;
    let kernel_row = |i: usize| -> Vec<f64> { x.iter().map(|xt| gaussian_kernel(x[i], xt, scale)).collect() };
    // K(x, x) = 1 for the Gaussian kernel
    let qd = 1.0;

    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;
    loop {
        // i: maximal violator in I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let up = if y[t] > 0.0 { alpha[t] < c } else { alpha[t] > 0.0 };
            if up && -y[t] * grad[t] >= gmax {
                gmax = -y[t] * grad[t];
                i_sel = Some(t);
            }
        }
        let Some(i) = i_sel else { break };
        let ki = kernel_row(i);

        // j: second-order choice in I_low
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut best_obj = f64::INFINITY;
        for t in 0..n {
            let low = if y[t] > 0.0 { alpha[t] > 0.0 } else { alpha[t] < c };
            if !low {
                continue;
            }
            let v = y[t] * grad[t];
            gmax2 = gmax2.max(v);
            let grad_diff = gmax + v;
            if grad_diff > 0.0 {
                let quad = (qd + qd - 2.0 * ki[t]).max(TAU);
                let obj = -(grad_diff * grad_diff) / quad;
                if obj <= best_obj {
                    best_obj = obj;
                    j_sel = Some(t);
                }
            }
        }
        if gmax + gmax2 < params.tolerance {
            break;
        }
        let Some(j) = j_sel else { break };
        if iterations >= params.max_iterations {
            return Err(Error::Numerical(format!(
                "SMO did not converge within {iterations} iterations (KKT gap {})",
                gmax + gmax2
            )));
        }
        iterations += 1;
        let kj = kernel_row(j);

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = y[i] * y[j] * ki[j];
        if y[i] != y[j] {
            let quad = (qd + qd + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (qd + qd - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * ki[t] * di + y[j] * kj[t] * dj);
        }
    }

    // bias from free vectors, or the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    let rho = if free > 0 {
        sum_free / free as f64
    } else {
        (ub + lb) / 2.0
    };
    Ok(DualSolution {
        alphas: alpha,
        rho,
        iterations,
    })
}

pub fn train_svm(train: &Samples, params: &SvmParams) -> Result<SvmModel> {
    let standardizer = params.standardize.then(|| Standardizer::fit(train));
    let data = match &standardizer {
        Some(s) => s.transform_all(train),
        None => train.clone(),
    };
    let counts = data.class_counts();
    let present: Vec<SeverityClass> = SeverityClass::ALL
        .into_iter()
        .filter(|c| counts[c.index()] > 0)
        .collect();
    if present.len() < 2 {
        return Err(Error::Data("SVM training needs at least two classes".into()));
    }

    let mut pairs = Vec::new();
    for (a, &pos) in present.iter().enumerate() {
        for &neg in &present[a + 1..] {
            pairs.push((pos, neg));
        }
    }
    let machines = pairs
        .into_iter()
        .map(|(pos, neg)| {
            let idx: Vec<usize> = (0..data.len())
                .filter(|&i| data.label(i) == pos || data.label(i) == neg)
                .collect();
            let x: Vec<&[f64]> = idx.iter().map(|&i| data.row(i)).collect();
            let y: Vec<f64> = idx
                .iter()
                .map(|&i| if data.label(i) == pos { 1.0 } else { -1.0 })
                .collect();
            let sol = solve_dual(&x, &y, params)?;
            let sv: Vec<usize> = (0..idx.len()).filter(|&t| sol.alphas[t] > 0.0).collect();
            Ok(BinaryMachine {
                positive: pos,
                negative: neg,
                support_vectors: sv.iter().map(|&t| x[t].to_vec()).collect(),
                alphas: sv.iter().map(|&t| sol.alphas[t]).collect(),
                labels: sv.iter().map(|&t| y[t]).collect(),
                rho: sol.rho,
                iterations: sol.iterations,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SvmModel {
        kernel_scale: params.kernel_scale,
        box_constraint: params.box_constraint,
        standardizer,
        machines,
    })
}

impl SvmModel {
    fn votes(&self, x: &[f64]) -> [f64; 3] {
        let z = match &self.standardizer {
            Some(s) => s.transform(x),
            None => x.to_vec(),
        };
        let mut votes = [0.0; 3];
        for m in &self.machines {
            let winner = if m.decision(&z, self.kernel_scale) > 0.0 {
                m.positive
            } else {
                m.negative
            };
            votes[winner.index()] += 1.0;
        }
        votes
    }

    pub fn vote_fractions(&self, x: &[f64]) -> Scores {
        let v = self.votes(x);
        let total = self.machines.len() as f64;
        v.map(|k| k / total)
    }

    pub fn predict(&self, x: &[f64]) -> SeverityClass {
        argmax(&self.votes(x))
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::blobs;
    use super::*;
    use SeverityClass::*;

    #[test]
    fn two_points_are_both_support_vectors() {
        let data = Samples::new(vec![vec![0.0, 0.0], vec![1.0, 1.0]], vec![Weak, Severe]).unwrap();
        let m = train_svm(&data, &SvmParams::default()).unwrap();
        assert_eq!(m.machines.len(), 1);
        assert_eq!(m.machines[0].support_vectors.len(), 2);
        assert_eq!(m.predict(&[0.0, 0.0]), Weak);
        assert_eq!(m.predict(&[1.0, 1.0]), Severe);
    }

    #[test]
    fn duals_satisfy_constraints() {
        let data = blobs(40, 3, 1.5, 12);
        let params = SvmParams {
            box_constraint: 0.5,
            ..SvmParams::default()
        };
        let m = train_svm(&data, &params).unwrap();
        assert_eq!(m.machines.len(), 3);
        for mach in &m.machines {
            assert!(mach.alphas.iter().all(|&a| (0.0..=0.5).contains(&a)));
            let s: f64 = mach.alphas.iter().zip(&mach.labels).map(|(a, y)| a * y).sum();
            assert!(s.abs() <= 1e-8, "sum alpha*y = {s}");
        }
    }

    #[test]
    fn training_point_query_returns_its_class() {
        let data = blobs(15, 3, 8.0, 3);
        let m = train_svm(&data, &SvmParams::default()).unwrap();
        for i in 0..data.len() {
            assert_eq!(m.predict(data.row(i)), data.label(i));
        }
    }

    #[test]
    fn single_class_rejected() {
        let data = Samples::new(vec![vec![0.0], vec![1.0]], vec![Weak, Weak]).unwrap();
        assert!(train_svm(&data, &SvmParams::default()).is_err());
    }

    #[test]
    fn iteration_cap_is_reported() {
        let data = blobs(30, 3, 0.5, 1);
        let params = SvmParams {
            max_iterations: 2,
            ..SvmParams::default()
        };
        match train_svm(&data, &params) {
            Err(Error::Numerical(msg)) => assert!(msg.contains("2 iterations"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }
}
