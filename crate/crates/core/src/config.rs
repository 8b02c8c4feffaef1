//! Run configuration, stored as TOML.
//!
//! Every random choice in a run derives from `seed` through
//! [`crate::seed::derive`] with these labels:
//!
//! | label      | drives                                  |
//! |------------|-----------------------------------------|
//! | `balance`  | minority-size sampling in preprocessing |
//! | `split`    | holdout / k-fold permutation            |
//! | `train`    | learner randomness (bootstrap draws)    |
//! | `tune`     | tuner initial shift and candidates      |
//! | `synth`    | synthetic fixture generation            |

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ingest::{ColumnMap, SolarFormat};
use crate::learners::{ModelKind, ModelParams};
use crate::pipeline::{PipelineConfig, SplitPlan};
use crate::synth::{Contamination, SynthSpec};
use crate::tuner::TuneConfig;
use crate::{seed, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub input: Inputs,
    pub pipeline: PipelineConfig,
    pub model: ModelParams,
    pub split: SplitConfig,
    pub tune: TuneSection,
    pub synth: SynthSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output_dir: PathBuf::from("out"),
            input: Inputs::default(),
            pipeline: PipelineConfig::default(),
            model: ModelParams::defaults(ModelKind::BaggedTrees),
            split: SplitConfig::default(),
            tune: TuneSection::default(),
            synth: SynthSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub records: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solar: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predictions: Option<PathBuf>,
    pub columns: ColumnMap,
    pub solar_format: SolarFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    Kfold,
    Holdout,
}

/// A split plan without its seed; the seed comes from the run's master seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub kind: SplitKind,
    pub k: usize,
    pub train_fraction: f64,
    pub stratified: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            kind: SplitKind::Kfold,
            k: 10,
            train_fraction: 0.9,
            stratified: false,
        }
    }
}

impl SplitConfig {
    pub fn plan(&self, seed: u64) -> SplitPlan {
        match self.kind {
            SplitKind::Kfold => SplitPlan::kfold(self.k, seed),
            SplitKind::Holdout => SplitPlan::Holdout {
                train_fraction: self.train_fraction,
                seed,
                stratified: self.stratified,
            },
        }
    }

    /// Parses `kfold:K`, `holdout:F` or `stratified:F`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad split `{s}`, expected kfold:K, holdout:F or stratified:F"));
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        let mut c = SplitConfig::default();
        match kind.trim() {
            "kfold" => {
                c.kind = SplitKind::Kfold;
                c.k = arg.trim().parse().map_err(|_| bad())?;
            }
            "holdout" | "stratified" => {
                c.kind = SplitKind::Holdout;
                c.train_fraction = arg.trim().parse().map_err(|_| bad())?;
                c.stratified = kind.trim() == "stratified";
            }
            _ => return Err(bad()),
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSection {
    pub iterations: usize,
    pub initial: usize,
    pub candidates: usize,
    pub noise: f64,
    /// `splits=lo:hi,learners=lo:hi`; unset bounds default to the dataset size.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<String>,
}

impl Default for TuneSection {
    fn default() -> Self {
        let t = TuneConfig::default();
        TuneSection {
            iterations: t.n_iterations,
            initial: t.n_initial,
            candidates: t.n_candidates,
            noise: t.noise,
            bounds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub rows: usize,
    pub proportions: [f64; 3],
    pub separation: f64,
    pub noise: f64,
    pub contamination: Contamination,
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = SynthSpec::default();
        SynthSection {
            rows: s.n_rows,
            proportions: s.class_proportions,
            separation: s.separation,
            noise: s.noise_scale,
            contamination: Contamination::default(),
        }
    }
}

/// Component seeds of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub balance: u64,
    pub split: u64,
    pub train: u64,
    pub tune: u64,
    pub synth: u64,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn seeds(&self) -> Seeds {
        Seeds {
            master: self.seed,
            balance: seed::derive(self.seed, "balance"),
            split: seed::derive(self.seed, "split"),
            train: seed::derive(self.seed, "train"),
            tune: seed::derive(self.seed, "tune"),
            synth: seed::derive(self.seed, "synth"),
        }
    }

    pub fn split_plan(&self) -> SplitPlan {
        self.split.plan(self.seeds().split)
    }

    pub fn tune_config(&self) -> TuneConfig {
        TuneConfig {
            n_iterations: self.tune.iterations,
            n_initial: self.tune.initial,
            n_candidates: self.tune.candidates,
            noise: self.tune.noise,
            seed: self.seeds().tune,
        }
    }

    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            n_rows: self.synth.rows,
            class_proportions: self.synth.proportions,
            separation: self.synth.separation,
            noise_scale: self.synth.noise,
            seed: self.seeds().synth,
            contamination: self.synth.contamination,
        }
    }

    /// Checks every section and names the offending field.
    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, e: Error| match e {
            Error::Config(m) | Error::Domain(m) => Error::Config(format!("{name}: {m}")),
            e => e,
        };
        let p = &self.pipeline;
        if !(0.0..=90.0).contains(&p.elevation_cutoff_deg) {
            return Err(Error::Config(format!(
                "pipeline.elevation_cutoff_deg: must lie in [0, 90], got {}",
                p.elevation_cutoff_deg
            )));
        }
        if !(p.s4_floor >= 0.0 && p.s4_floor.is_finite()) {
            return Err(Error::Config(format!(
                "pipeline.s4_floor: must be >= 0, got {}",
                p.s4_floor
            )));
        }
        if let crate::pipeline::IppSource::Computed { shell, .. } = &p.ipp {
            shell.validate().map_err(|e| field("pipeline.ipp.shell", e))?;
        }
        self.model.validate().map_err(|e| field("model", e))?;
        self.split_plan().validate().map_err(|e| field("split", e))?;
        if self.tune.initial > self.tune.iterations {
            return Err(Error::Config(format!(
                "tune.initial: {} exceeds tune.iterations {}",
                self.tune.initial, self.tune.iterations
            )));
        }
        if self.tune.candidates == 0 {
            return Err(Error::Config("tune.candidates: must be at least 1".into()));
        }
        self.synth_spec().validate().map_err(|e| field("synth", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{BaggedParams, KnnParams};
    use crate::pipeline::IppSource;

    #[test]
    fn default_round_trips() {
        let c = RunConfig::default();
        let text = c.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn full_round_trip() {
        let mut c = RunConfig {
            seed: 17,
            output_dir: "runs/a".into(),
            model: ModelParams::Knn(KnnParams {
                k: 7,
                ..KnnParams::default()
            }),
            split: SplitConfig::parse("stratified:0.8").unwrap(),
            ..RunConfig::default()
        };
        c.input.records = Some("data/ismr.csv".into());
        c.input.columns = ColumnMap::week_tow_ismr();
        c.input.solar_format = SolarFormat::omniweb();
        c.pipeline.ipp = IppSource::Computed {
            receiver_lat_deg: -77.85,
            receiver_lon_deg: 166.67,
            shell: Default::default(),
        };
        c.synth.proportions = SynthSpec::proportions_from_counts([3789, 157, 23]);
        c.tune.bounds = Some("splits=1:300".into());
        let text = c.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c, "{text}");
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = RunConfig::from_toml("seed = 5\n[model]\nmodel_kind = \"bagged_trees\"\nn_learners = 12\n").unwrap();
        assert_eq!(c.seed, 5);
        assert_eq!(
            c.model,
            ModelParams::BaggedTrees(BaggedParams {
                n_learners: 12,
                ..BaggedParams::default()
            })
        );
        assert_eq!(c.split, SplitConfig::default());
    }

    #[test]
    fn field_level_errors() {
        let e = RunConfig::from_toml("[split]\nkind = \"kfold\"\nk = 1\n").unwrap_err();
        assert!(e.to_string().contains("split"), "{e}");
        assert_eq!(e.exit_code(), 1);
        let e = RunConfig::from_toml("[pipeline]\ns4_floor = -1.0\n").unwrap_err();
        assert!(e.to_string().contains("pipeline.s4_floor"), "{e}");
        let e = RunConfig::from_toml("sed = 3\n").unwrap_err();
        assert!(e.to_string().contains("sed"), "{e}");
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let s = RunConfig {
            seed: 3,
            ..RunConfig::default()
        }
        .seeds();
        let all = [s.balance, s.split, s.train, s.tune, s.synth];
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                assert_ne!(all[i], all[j]);
            }
        }
        assert_eq!(
            s,
            RunConfig {
                seed: 3,
                ..RunConfig::default()
            }
            .seeds()
        );
    }

    #[test]
    fn split_strings() {
        assert_eq!(SplitConfig::parse("kfold:5").unwrap().k, 5);
        let h = SplitConfig::parse("holdout:0.9").unwrap();
        assert_eq!(
            (h.kind, h.train_fraction, h.stratified),
            (SplitKind::Holdout, 0.9, false)
        );
        assert!(SplitConfig::parse("loo").is_err());
        assert!(SplitConfig::parse("kfold:x").is_err());
    }
}
