//! Bayesian optimization over small integer search spaces.
//!
//! The surrogate is a Gaussian process with a squared-exponential kernel on
//! coordinates scaled to the unit cube (log-scaled where a dimension asks for
//! it). Objectives are standardized before fitting; the length scale is the
//! best of a fixed grid by log marginal likelihood. Proposals maximize
//! expected improvement over a seeded random candidate set.

use std::collections::HashSet;
use std::f64::consts::{PI, SQRT_2};
use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::learners::{BaggedParams, ModelParams, Samples};
use crate::pipeline::SplitPlan;
use crate::{eval, seed, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub lo: i64,
    pub hi: i64,
    #[serde(default)]
    pub log: bool,
}

impl Dimension {
    pub fn new(name: impl Into<String>, lo: i64, hi: i64, log: bool) -> Self {
        Dimension {
            name: name.into(),
            lo,
            hi,
            log,
        }
    }

    fn to_unit(&self, v: i64) -> f64 {
        if self.hi == self.lo {
            return 0.5;
        }
        if self.log {
            ((v as f64).ln() - (self.lo as f64).ln()) / ((self.hi as f64).ln() - (self.lo as f64).ln())
        } else {
            (v - self.lo) as f64 / (self.hi - self.lo) as f64
        }
    }

    fn value_at(&self, u: f64) -> i64 {
        let u = u.clamp(0.0, 1.0);
        let v = if self.log {
            ((self.lo as f64).ln() + u * ((self.hi as f64).ln() - (self.lo as f64).ln())).exp()
        } else {
            self.lo as f64 + u * (self.hi - self.lo) as f64
        };
        (v.round() as i64).clamp(self.lo, self.hi)
    }

    fn cardinality(&self) -> u128 {
        (self.hi - self.lo) as u128 + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dims: Vec<Dimension>,
}

impl SearchSpace {
    pub fn new(dims: Vec<Dimension>) -> Result<Self> {
        let s = SearchSpace { dims };
        s.validate()?;
        Ok(s)
    }

    /// Maximum number of splits and number of learners, both log-scaled.
    pub fn bagged_trees(n_rows: usize) -> Result<Self> {
        SearchSpace::new(vec![
            Dimension::new("splits", 1, (n_rows as i64 - 1).max(1), true),
            Dimension::new("learners", 10, 500, true),
        ])
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::Config("search space has no dimensions".into()));
        }
        for d in &self.dims {
            if d.lo < 1 || d.hi < d.lo {
                return Err(Error::Config(format!(
                    "dimension {}: bounds {}:{} need 1 <= lo <= hi",
                    d.name, d.lo, d.hi
                )));
            }
        }
        Ok(())
    }

    /// Replaces bounds from `name=lo:hi,name=lo:hi`. Names must already exist.
    pub fn with_bounds(mut self, spec: &str) -> Result<Self> {
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let bad = || Error::Config(format!("bad bound `{part}`, expected name=lo:hi"));
            let (name, range) = part.split_once('=').ok_or_else(bad)?;
            let (lo, hi) = range.split_once(':').ok_or_else(bad)?;
            let dim = self
                .dims
                .iter_mut()
                .find(|d| d.name == name.trim())
                .ok_or_else(|| Error::Config(format!("unknown search dimension `{}`", name.trim())))?;
            dim.lo = lo.trim().parse().map_err(|_| bad())?;
            dim.hi = hi.trim().parse().map_err(|_| bad())?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn to_unit(&self, p: &[i64]) -> Vec<f64> {
        self.dims.iter().zip(p).map(|(d, v)| d.to_unit(*v)).collect()
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<i64> {
        self.dims.iter().zip(u).map(|(d, v)| d.value_at(*v)).collect()
    }

    pub fn contains(&self, p: &[i64]) -> bool {
        p.len() == self.dims.len() && self.dims.iter().zip(p).all(|(d, v)| (d.lo..=d.hi).contains(v))
    }

    fn cardinality(&self) -> u128 {
        self.dims
            .iter()
            .map(Dimension::cardinality)
            .fold(1u128, |a, b| a.saturating_mul(b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub params: Vec<i64>,
    pub objective: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedTrial {
    pub params: Vec<i64>,
    pub message: String,
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Expected improvement over `best` when maximizing.
pub fn expected_improvement(mean: f64, stdev: f64, best: f64) -> f64 {
    let gain = mean - best;
    if stdev <= 0.0 {
        return gain.max(0.0);
    }
    let z = gain / stdev;
    (gain * std_normal_cdf(z) + stdev * std_normal_pdf(z)).max(0.0)
}

const LENGTH_SCALES: [f64; 7] = [0.05, 0.1, 0.15, 0.25, 0.4, 0.6, 1.0];
const JITTER: [f64; 6] = [0.0, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2];

/// Fitted GP posterior.
#[derive(Debug, Clone)]
pub struct Surrogate {
    space: SearchSpace,
    x: Vec<Vec<f64>>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    y_mean: f64,
    y_scale: f64,
    pub length_scale: f64,
    pub noise: f64,
}

fn se(a: &[f64], b: &[f64], ell: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
    (-d2 / (2.0 * ell * ell)).exp()
}

fn factor(x: &[Vec<f64>], ell: f64, noise: f64) -> Result<Cholesky<f64, Dyn>> {
    let n = x.len();
    for jitter in JITTER {
        let k = DMatrix::from_fn(n, n, |i, j| {
            se(&x[i], &x[j], ell) + if i == j { noise + jitter } else { 0.0 }
        });
        if let Some(c) = Cholesky::new(k) {
            return Ok(c);
        }
    }
    Err(Error::Numerical(format!(
        "kernel matrix not positive definite at length scale {ell} even with jitter {}",
        JITTER[JITTER.len() - 1]
    )))
}

/// Fits the surrogate to successful trials. `noise` is the observation noise
/// variance in standardized objective units.
pub fn fit_surrogate(trials: &[TrialRecord], space: &SearchSpace, noise: f64) -> Result<Surrogate> {
    if trials.len() < 2 {
        return Err(Error::Data(format!(
            "surrogate needs at least 2 trials, got {}",
            trials.len()
        )));
    }
    let x: Vec<Vec<f64>> = trials.iter().map(|t| space.to_unit(&t.params)).collect();
    let n = trials.len() as f64;
    let y_mean = trials.iter().map(|t| t.objective).sum::<f64>() / n;
    let sd = (trials.iter().map(|t| (t.objective - y_mean).powi(2)).sum::<f64>() / n).sqrt();
    let y_scale = if sd > 0.0 { sd } else { 1.0 };
    let ys = DVector::from_iterator(trials.len(), trials.iter().map(|t| (t.objective - y_mean) / y_scale));

    // (log marginal likelihood, length scale, factor, weights)
    type Fit = (f64, f64, Cholesky<f64, Dyn>, DVector<f64>);
    let mut best: Option<Fit> = None;
    let mut last_err = None;
    for ell in LENGTH_SCALES {
        let chol = match factor(&x, ell, noise) {
            Ok(c) => c,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let alpha = chol.solve(&ys);
        let log_det: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum();
        let lml = -0.5 * ys.dot(&alpha) - log_det;
        if best.as_ref().is_none_or(|b| lml > b.0) {
            best = Some((lml, ell, chol, alpha));
        }
    }
    let (_, length_scale, chol, alpha) = best.ok_or_else(|| last_err.expect("grid is non-empty"))?;
    Ok(Surrogate {
        space: space.clone(),
        x,
        chol,
        alpha,
        y_mean,
        y_scale,
        length_scale,
        noise,
    })
}

impl Surrogate {
    /// Posterior mean and standard deviation at a unit-cube point.
    pub fn predict_unit(&self, u: &[f64]) -> (f64, f64) {
        let k = DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| se(xi, u, self.length_scale)));
        let mean = self.y_mean + self.y_scale * k.dot(&self.alpha);
        let v = self
            .chol
            .l()
            .solve_lower_triangular(&k)
            .expect("Cholesky factor is triangular and nonsingular");
        let var = (1.0 - v.dot(&v)).max(0.0);
        (mean, self.y_scale * var.sqrt())
    }

    pub fn predict(&self, p: &[i64]) -> (f64, f64) {
        self.predict_unit(&self.space.to_unit(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneConfig {
    pub n_iterations: usize,
    pub n_initial: usize,
    pub n_candidates: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            n_iterations: 50,
            n_initial: 10,
            n_candidates: 512,
            noise: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: TrialRecord,
    pub history: Vec<TrialRecord>,
    pub failures: Vec<FailedTrial>,
}

impl TuneResult {
    /// History as CSV: `trial,<dimension names>,objective,wall_time`.
    pub fn write_history_csv<W: std::io::Write>(&self, space: &SearchSpace, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["trial".to_string()];
        header.extend(space.dims.iter().map(|d| d.name.clone()));
        header.extend(["objective".to_string(), "wall_time".to_string()]);
        w.write_record(&header)?;
        for (i, t) in self.history.iter().enumerate() {
            let mut rec = vec![(i + 1).to_string()];
            rec.extend(t.params.iter().map(i64::to_string));
            rec.push(t.objective.to_string());
            rec.push(format!("{:.6}", t.wall_time));
            w.write_record(&rec)?;
        }
        w.flush().map_err(Error::Stream)?;
        Ok(())
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let (mut inv, mut f) = (0.0, 1.0 / base as f64);
    while i > 0 {
        inv += f * (i % base) as f64;
        i /= base;
        f /= base as f64;
    }
    inv
}

const PRIMES: [u64; 10] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29];

/// Maximizes `objective` over `space`.
///
/// The first `n_initial` points follow a Halton sequence under a seeded
/// random shift; later points maximize expected improvement over
/// `n_candidates` uniform draws. Every point is rounded to the integer grid
/// and no point is evaluated twice. A failed evaluation uses up its
/// iteration and is reported in `failures`. The search ends early when the
/// grid is exhausted.
pub fn tune<F>(mut objective: F, space: &SearchSpace, config: &TuneConfig) -> Result<TuneResult>
where
    F: FnMut(&[i64]) -> Result<f64>,
{
    space.validate()?;
    if config.n_initial > config.n_iterations {
        return Err(Error::Config(format!(
            "n_initial {} exceeds n_iterations {}",
            config.n_initial, config.n_iterations
        )));
    }
    if space.len() > PRIMES.len() {
        return Err(Error::Config(format!("at most {} search dimensions", PRIMES.len())));
    }
    let d = space.len();
    let mut rng = seed::rng(seed::derive(config.seed, "tuner"));
    let shift: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
    let capacity = space.cardinality();

    let mut seen: HashSet<Vec<i64>> = HashSet::new();
    let mut history: Vec<TrialRecord> = Vec::new();
    let mut failures = Vec::new();
    let mut halton_index = 1u64;

    for iter in 0..config.n_iterations {
        if seen.len() as u128 >= capacity {
            break;
        }
        let point = if iter < config.n_initial || history.len() < 2 {
            let mut p = None;
            for _ in 0..10_000 {
                let u: Vec<f64> = (0..d)
                    .map(|j| (radical_inverse(halton_index, PRIMES[j]) + shift[j]).fract())
                    .collect();
                halton_index += 1;
                let cand = space.from_unit(&u);
                if !seen.contains(&cand) {
                    p = Some(cand);
                    break;
                }
            }
            match p {
                Some(p) => p,
                None => break,
            }
        } else {
            let surrogate = fit_surrogate(&history, space, config.noise)?;
            let incumbent = history.iter().map(|t| t.objective).fold(f64::NEG_INFINITY, f64::max);
            let mut best: Option<(f64, Vec<i64>)> = None;
            let mut drawn: HashSet<Vec<i64>> = HashSet::new();
            for _ in 0..config.n_candidates {
                let mut cand = None;
                for _ in 0..16 {
                    let u: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
                    let c = space.from_unit(&u);
                    if !seen.contains(&c) && !drawn.contains(&c) {
                        cand = Some(c);
                        break;
                    }
                }
                let Some(c) = cand else { continue };
                let (mu, sigma) = surrogate.predict(&c);
                let ei = expected_improvement(mu, sigma, incumbent);
                if best.as_ref().is_none_or(|(b, _)| ei > *b) {
                    best = Some((ei, c.clone()));
                }
                drawn.insert(c);
            }
            match best {
                Some((_, c)) => c,
                None => break,
            }
        };
        seen.insert(point.clone());

        let start = Instant::now();
        let outcome = objective(&point);
        let wall_time = start.elapsed().as_secs_f64();
        match outcome {
            Ok(v) if (0.0..=1.0).contains(&v) => history.push(TrialRecord {
                params: point,
                objective: v,
                wall_time,
            }),
            Ok(v) => failures.push(FailedTrial {
                params: point,
                message: format!("objective {v} outside [0, 1]"),
            }),
            Err(e) => failures.push(FailedTrial {
                params: point,
                message: e.to_string(),
            }),
        }
    }

    let best = history
        .iter()
        .fold(None::<&TrialRecord>, |b, t| match b {
            Some(b) if b.objective >= t.objective => Some(b),
            _ => Some(t),
        })
        .cloned()
        .ok_or_else(|| Error::Numerical(format!("all {} tuning trials failed", failures.len())))?;
    Ok(TuneResult {
        best,
        history,
        failures,
    })
}

/// Validation accuracy of bagged trees with `[max_splits, n_learners]`
/// under `plan`.
pub fn bagged_objective<'a>(data: &'a Samples, plan: SplitPlan, seed: u64) -> impl FnMut(&[i64]) -> Result<f64> + 'a {
    move |p: &[i64]| {
        let params = ModelParams::BaggedTrees(BaggedParams {
            max_splits: Some(p[0] as usize),
            n_learners: p[1] as usize,
            ..BaggedParams::default()
        });
        Ok(eval::cross_validate(data, &params, &plan, seed)?.accuracy())
    }
}
