//! Amplitude-scintillation severity classification for GNSS monitoring
//! receivers.
//!
//! The crate covers the whole offline workflow: reading scintillation
//! records and daily solar indices ([`ingest`]), mapping observations to
//! ionospheric pierce points ([`geo`]), the filtering and labelling steps that
//! turn raw S4 observations into a classification dataset ([`pipeline`]), six
//! classifiers sharing one decision-tree core ([`learners`]), Bayesian
//! hyperparameter search ([`tuner`]) and confusion-matrix evaluation
//! ([`metrics`]). [`synth`] generates seeded fixtures for desk-scale runs.

pub mod config;
pub mod error;
pub mod eval;
pub mod geo;
pub mod ingest;
pub mod learners;
pub mod metrics;
pub mod pipeline;
pub mod seed;
pub mod synth;
pub mod tuner;

pub use error::{Error, Result};
pub use pipeline::{Dataset, FeatureVector, SeverityClass};
