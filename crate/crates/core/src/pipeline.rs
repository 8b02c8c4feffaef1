//! Preprocessing: from joined receiver records to a labelled dataset.
//!
//! Steps, in order:
//! 1. elevation cutoff (retain `elevation >= cutoff`) and removal of `S4 < 0`
//! 2. pierce point per record, longitude unwrapped to [0, 360)
//! 3. S4 floor (retain `S4 >= floor`; lower values count as no scintillation)
//! 4. join with daily solar indices, dropping days with F10.7 missing
//! 5. severity class from S4
//! 6. class counts (the imbalanced dataset)
//! 7. optional balancing to the minority-class size
//!
//! [`Provenance`] records the retained count after every step.

use std::io::{BufRead, Write};

use chrono::Timelike;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::geo::{self, IppCoordinate, ShellModel};
use crate::ingest::{self, ScintRecord, SolarDay};
use crate::{seed, Error, Result};

pub const DEFAULT_ELEVATION_CUTOFF_DEG: f64 = 20.0;
pub const DEFAULT_S4_FLOOR: f64 = 0.05;
/// Upper S4 bound (exclusive) of the weak class.
pub const WEAK_UPPER: f64 = 0.2;
/// Upper S4 bound (exclusive) of the moderate class.
pub const MODERATE_UPPER: f64 = 0.3;

pub const N_FEATURES: usize = 7;
pub const FEATURE_NAMES: [&str; N_FEATURES] = ["doy", "hod", "ipp_lat_deg", "ipp_lon_deg", "kp", "ssn", "f107"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum SeverityClass {
    Weak = 1,
    Moderate = 2,
    Severe = 3,
}

impl SeverityClass {
    pub const ALL: [SeverityClass; 3] = [SeverityClass::Weak, SeverityClass::Moderate, SeverityClass::Severe];

    /// 0-based position, for indexing per-class arrays.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn label(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            SeverityClass::Weak => "weak",
            SeverityClass::Moderate => "moderate",
            SeverityClass::Severe => "severe",
        }
    }
}

impl TryFrom<u8> for SeverityClass {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(SeverityClass::Weak),
            2 => Ok(SeverityClass::Moderate),
            3 => Ok(SeverityClass::Severe),
            _ => Err(Error::Format(format!("severity class must be 1, 2 or 3, got {v}"))),
        }
    }
}

impl From<SeverityClass> for u8 {
    fn from(c: SeverityClass) -> u8 {
        c.label()
    }
}

impl std::fmt::Display for SeverityClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// Severity of an S4 value: weak below 0.2, moderate in [0.2, 0.3), severe from 0.3.
pub fn classify_s4(s4: f64) -> SeverityClass {
    if s4 < WEAK_UPPER {
        SeverityClass::Weak
    } else if s4 < MODERATE_UPPER {
        SeverityClass::Moderate
    } else {
        SeverityClass::Severe
    }
}

/// Model inputs for one observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub doy: u16,
    /// Integer UTC hour, 0-23.
    pub hod: u8,
    pub ipp_lat_deg: f64,
    /// Unwrapped, in [0, 360).
    pub ipp_lon_deg: f64,
    pub kp: f64,
    pub ssn: f64,
    pub f107: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; N_FEATURES] {
        [
            f64::from(self.doy),
            f64::from(self.hod),
            self.ipp_lat_deg,
            self.ipp_lon_deg,
            self.kp,
            self.ssn,
            self.f107,
        ]
    }

    pub fn from_array(v: [f64; N_FEATURES]) -> Result<Self> {
        let int = |x: f64, lo: f64, hi: f64, name: &str| {
            if x.fract() == 0.0 && (lo..=hi).contains(&x) {
                Ok(x)
            } else {
                Err(Error::Data(format!(
                    "{name} must be an integer in [{lo}, {hi}], got {x}"
                )))
            }
        };
        let fv = FeatureVector {
            doy: int(v[0], 1.0, 366.0, "doy")? as u16,
            hod: int(v[1], 0.0, 23.0, "hod")? as u8,
            ipp_lat_deg: v[2],
            ipp_lon_deg: v[3],
            kp: v[4],
            ssn: v[5],
            f107: v[6],
        };
        fv.validate()?;
        Ok(fv)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.to_array().iter().all(|x| x.is_finite()) {
            return Err(Error::Data(format!("non-finite feature in {self:?}")));
        }
        if !(1..=366).contains(&self.doy) || self.hod > 23 {
            return Err(Error::Data(format!("doy/hod out of range in {self:?}")));
        }
        if !(-90.0..=90.0).contains(&self.ipp_lat_deg) {
            return Err(Error::Data(format!("latitude {} out of range", self.ipp_lat_deg)));
        }
        if !(0.0..360.0).contains(&self.ipp_lon_deg) {
            return Err(Error::Data(format!("longitude {} not unwrapped", self.ipp_lon_deg)));
        }
        Ok(())
    }
}

/// Labelled rows plus a free-text lineage.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Vec<(FeatureVector, SeverityClass)>,
    provenance: Vec<String>,
}

impl Dataset {
    pub fn new(rows: Vec<(FeatureVector, SeverityClass)>) -> Self {
        Dataset {
            rows,
            provenance: Vec::new(),
        }
    }

    pub fn with_provenance(mut self, note: impl Into<String>) -> Self {
        self.provenance.push(note.into());
        self
    }

    pub fn rows(&self) -> &[(FeatureVector, SeverityClass)] {
        &self.rows
    }

    pub fn provenance(&self) -> &[String] {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self) -> Vec<SeverityClass> {
        self.rows.iter().map(|(_, c)| *c).collect()
    }

    pub fn class_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for (_, c) in &self.rows {
            counts[c.index()] += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            rows: indices.iter().map(|&i| self.rows[i]).collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{},class", FEATURE_NAMES.join(","))?;
        for (f, c) in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                f.doy, f.hod, f.ipp_lat_deg, f.ipp_lon_deg, f.kp, f.ssn, f.f107, c
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(source: R) -> Result<Dataset> {
        #[derive(Deserialize)]
        struct Row {
            doy: f64,
            hod: f64,
            ipp_lat_deg: f64,
            ipp_lon_deg: f64,
            kp: f64,
            ssn: f64,
            f107: f64,
            class: u8,
        }
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
        let mut rows = Vec::new();
        for (i, row) in reader.deserialize::<Row>().enumerate() {
            let r = row.map_err(|e| Error::Format(format!("dataset row {}: {e}", i + 2)))?;
            let fv = FeatureVector::from_array([r.doy, r.hod, r.ipp_lat_deg, r.ipp_lon_deg, r.kp, r.ssn, r.f107])
                .map_err(|e| Error::Data(format!("dataset row {}: {e}", i + 2)))?;
            rows.push((fv, SeverityClass::try_from(r.class)?));
        }
        Ok(Dataset::new(rows))
    }

    /// SHA-256 of the CSV serialization.
    pub fn fingerprint(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        hex(&Sha256::digest(&buf))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Step 1: keeps rows at or above the elevation cutoff and drops negative S4.
pub fn apply_elevation_cutoff(records: Vec<ScintRecord>, cutoff_deg: f64) -> Vec<ScintRecord> {
    records
        .into_iter()
        .filter(|r| r.elevation_deg >= cutoff_deg && r.s4 >= 0.0)
        .collect()
}

/// Step 2: negative longitudes get 360 added.
pub fn unwrap_longitude(lon_deg: f64) -> f64 {
    if lon_deg < 0.0 {
        lon_deg + 360.0
    } else {
        lon_deg
    }
}

/// Step 3: keeps rows with `s4 >= floor`.
pub fn apply_s4_floor(records: Vec<ScintRecord>, floor: f64) -> Vec<ScintRecord> {
    records.into_iter().filter(|r| r.s4 >= floor).collect()
}

pub fn extract_features(record: &ScintRecord, solar_day: &SolarDay, ipp: IppCoordinate) -> FeatureVector {
    FeatureVector {
        doy: ingest::day_of_year(&record.timestamp) as u16,
        hod: record.timestamp.hour() as u8,
        ipp_lat_deg: ipp.lat_deg,
        ipp_lon_deg: unwrap_longitude(ipp.lon_deg),
        kp: solar_day.kp,
        ssn: solar_day.ssn,
        f107: solar_day.f107,
    }
}

/// Step 7: draws the minority-class count from every class, uniformly and
/// without replacement. Selected rows keep their original relative order.
pub fn balance(dataset: &Dataset, seed: u64) -> Result<Dataset> {
    let counts = dataset.class_counts();
    if let Some(missing) = SeverityClass::ALL.iter().find(|c| counts[c.index()] == 0) {
        return Err(Error::Data(format!(
            "cannot balance: class {} ({}) has no rows",
            missing,
            missing.name()
        )));
    }
    let per_class = *counts.iter().min().unwrap();
    let mut rng = seed::rng(seed);
    let mut keep = Vec::with_capacity(3 * per_class);
    for class in SeverityClass::ALL {
        let members: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.rows[i].1 == class).collect();
        keep.extend(
            rand::seq::index::sample(&mut rng, members.len(), per_class)
                .into_iter()
                .map(|j| members[j]),
        );
    }
    keep.sort_unstable();
    Ok(dataset
        .subset(&keep)
        .with_provenance(format!("balanced to {per_class} rows per class (seed {seed})")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitPlan {
    Holdout {
        train_fraction: f64,
        seed: u64,
        /// Split each class separately in the same proportion.
        #[serde(default)]
        stratified: bool,
    },
    KFold {
        k: usize,
        seed: u64,
    },
}

impl SplitPlan {
    pub fn holdout(train_fraction: f64, seed: u64) -> Self {
        SplitPlan::Holdout {
            train_fraction,
            seed,
            stratified: false,
        }
    }

    pub fn kfold(k: usize, seed: u64) -> Self {
        SplitPlan::KFold { k, seed }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SplitPlan::Holdout { train_fraction, .. } if !(train_fraction > 0.0 && train_fraction < 1.0) => {
                Err(Error::Config(format!(
                    "holdout train fraction must lie in (0, 1), got {train_fraction}"
                )))
            }
            SplitPlan::KFold { k, .. } if k < 2 => Err(Error::Config(format!("k-fold needs k >= 2, got {k}"))),
            _ => Ok(()),
        }
    }

    pub fn seed(&self) -> u64 {
        match *self {
            SplitPlan::Holdout { seed, .. } | SplitPlan::KFold { seed, .. } => seed,
        }
    }
}

/// A `(train, validation)` index pair.
pub type Fold = (Vec<usize>, Vec<usize>);

pub fn make_splits(dataset: &Dataset, plan: &SplitPlan) -> Result<Vec<Fold>> {
    split_indices(&dataset.labels(), plan)
}

/// Splits `0..labels.len()` per `plan`.
///
/// Holdout trains on `round(fraction * N)` shuffled rows. K-fold shuffles
/// once and cuts the permutation into `k` contiguous folds; the first
/// `N mod k` folds take one extra row.
pub fn split_indices(labels: &[SeverityClass], plan: &SplitPlan) -> Result<Vec<Fold>> {
    plan.validate()?;
    let n = labels.len();
    if n == 0 {
        return Err(Error::Data("cannot split an empty dataset".into()));
    }
    let mut rng = seed::rng(plan.seed());
    match *plan {
        SplitPlan::Holdout {
            train_fraction,
            stratified: false,
            ..
        } => {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let n_train = (train_fraction * n as f64).round() as usize;
            if n_train == 0 || n_train == n {
                return Err(Error::Data(format!(
                    "holdout fraction {train_fraction} leaves an empty side for {n} rows"
                )));
            }
            let validation = perm.split_off(n_train);
            Ok(vec![(perm, validation)])
        }
        SplitPlan::Holdout {
            train_fraction,
            stratified: true,
            ..
        } => {
            let (mut train, mut validation) = (Vec::new(), Vec::new());
            for class in SeverityClass::ALL {
                let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
                members.shuffle(&mut rng);
                let cut = (train_fraction * members.len() as f64).round() as usize;
                validation.extend(members.split_off(cut));
                train.extend(members);
            }
            if train.is_empty() || validation.is_empty() {
                return Err(Error::Data(format!(
                    "holdout fraction {train_fraction} leaves an empty side for {n} rows"
                )));
            }
            train.shuffle(&mut rng);
            validation.shuffle(&mut rng);
            Ok(vec![(train, validation)])
        }
        SplitPlan::KFold { k, .. } => {
            if k > n {
                return Err(Error::Data(format!("{k} folds requested for {n} rows")));
            }
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let (base, extra) = (n / k, n % k);
            let mut folds = Vec::with_capacity(k);
            let mut start = 0;
            for f in 0..k {
                let len = base + usize::from(f < extra);
                let validation = perm[start..start + len].to_vec();
                let train = perm[..start].iter().chain(&perm[start + len..]).copied().collect();
                folds.push((train, validation));
                start += len;
            }
            Ok(folds)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IppSource {
    /// Use the pierce point carried by each record; records without one are dropped.
    #[default]
    Records,
    /// Compute the pierce point from elevation/azimuth for a fixed receiver.
    Computed {
        receiver_lat_deg: f64,
        receiver_lon_deg: f64,
        #[serde(default)]
        shell: ShellModel,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    #[serde(default = "default_cutoff")]
    pub elevation_cutoff_deg: f64,
    #[serde(default = "default_floor")]
    pub s4_floor: f64,
    #[serde(default = "default_balance")]
    pub balance: bool,
    pub ipp: IppSource,
}

fn default_cutoff() -> f64 {
    DEFAULT_ELEVATION_CUTOFF_DEG
}
fn default_floor() -> f64 {
    DEFAULT_S4_FLOOR
}
fn default_balance() -> bool {
    true
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            elevation_cutoff_deg: DEFAULT_ELEVATION_CUTOFF_DEG,
            s4_floor: DEFAULT_S4_FLOOR,
            balance: true,
            ipp: IppSource::Records,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceSummary {
    pub seed: u64,
    pub per_class: usize,
    pub total: usize,
}

/// Retained counts after every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub input_records: usize,
    pub elevation_cutoff_deg: f64,
    pub dropped_low_elevation: usize,
    pub dropped_negative_s4: usize,
    pub after_elevation_cutoff: usize,
    pub ipp_source: String,
    pub dropped_missing_ipp: usize,
    pub longitudes_unwrapped: usize,
    pub after_ipp: usize,
    pub s4_floor: f64,
    pub dropped_below_floor: usize,
    pub after_s4_floor: usize,
    pub excluded_no_solar_day: usize,
    pub excluded_missing_index: usize,
    pub after_index_join: usize,
    /// Weak, moderate, severe.
    pub class_counts: [usize; 3],
    pub imbalanced_total: usize,
    pub balanced: Option<BalanceSummary>,
    pub hod_convention: String,
}

#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub imbalanced: Dataset,
    pub balanced: Option<Dataset>,
    pub provenance: Provenance,
}

/// Runs steps 1-7 over `records`. `balance_seed` is only consulted when
/// balancing is enabled.
pub fn preprocess(
    records: Vec<ScintRecord>,
    solar: &[SolarDay],
    config: &PipelineConfig,
    balance_seed: u64,
) -> Result<Preprocessed> {
    let input_records = records.len();
    let cutoff = config.elevation_cutoff_deg;
    let dropped_low_elevation = records.iter().filter(|r| r.elevation_deg < cutoff).count();
    let dropped_negative_s4 = records
        .iter()
        .filter(|r| r.elevation_deg >= cutoff && r.s4 < 0.0)
        .count();
    let records = apply_elevation_cutoff(records, cutoff);
    let after_elevation_cutoff = records.len();

    let (with_ipp, dropped_missing_ipp, ipp_source) = attach_ipp(records, &config.ipp)?;
    let longitudes_unwrapped = with_ipp.iter().filter(|(_, ipp)| ipp.lon_deg < 0.0).count();
    let after_ipp = with_ipp.len();

    let floor = config.s4_floor;
    let with_ipp: Vec<_> = with_ipp.into_iter().filter(|(r, _)| r.s4 >= floor).collect();
    let after_s4_floor = with_ipp.len();

    // join keeps record order; pair each joined record back with its pierce point
    let (recs, ipps): (Vec<ScintRecord>, Vec<IppCoordinate>) = with_ipp.into_iter().unzip();
    let by_day: std::collections::HashMap<_, _> = solar.iter().map(|d| (d.date, *d)).collect();
    let mut excluded_no_solar_day = 0;
    let mut excluded_missing_index = 0;
    let mut rows = Vec::new();
    for (rec, ipp) in recs.iter().zip(ipps) {
        match by_day.get(&rec.timestamp.date_naive()) {
            None => excluded_no_solar_day += 1,
            Some(day) if day.f107_missing => excluded_missing_index += 1,
            Some(day) => {
                let fv = extract_features(rec, day, ipp);
                fv.validate()?;
                rows.push((fv, classify_s4(rec.s4)));
            }
        }
    }
    let after_index_join = rows.len();

    let imbalanced = Dataset::new(rows).with_provenance(format!(
        "preprocessed {input_records} records: elevation >= {cutoff}, s4 >= {floor}, ipp {ipp_source}"
    ));
    let class_counts = imbalanced.class_counts();
    let (balanced, balance_summary) = if config.balance {
        let b = balance(&imbalanced, balance_seed)?;
        let summary = BalanceSummary {
            seed: balance_seed,
            per_class: b.len() / 3,
            total: b.len(),
        };
        (Some(b), Some(summary))
    } else {
        (None, None)
    };

    Ok(Preprocessed {
        provenance: Provenance {
            input_records,
            elevation_cutoff_deg: cutoff,
            dropped_low_elevation,
            dropped_negative_s4,
            after_elevation_cutoff,
            ipp_source,
            dropped_missing_ipp,
            longitudes_unwrapped,
            after_ipp,
            s4_floor: floor,
            dropped_below_floor: after_ipp - after_s4_floor,
            after_s4_floor,
            excluded_no_solar_day,
            excluded_missing_index,
            after_index_join,
            class_counts,
            imbalanced_total: imbalanced.len(),
            balanced: balance_summary,
            hod_convention: "integer UTC hour, minutes truncated".into(),
        },
        imbalanced,
        balanced,
    })
}

type WithIpp = Vec<(ScintRecord, IppCoordinate)>;

fn attach_ipp(records: Vec<ScintRecord>, source: &IppSource) -> Result<(WithIpp, usize, String)> {
    match source {
        IppSource::Records => {
            let total = records.len();
            let kept: Vec<_> = records
                .into_iter()
                .filter_map(|r| match (r.ipp_lat_deg, r.ipp_lon_deg) {
                    (Some(lat_deg), Some(lon_deg)) => Some((r, IppCoordinate { lat_deg, lon_deg })),
                    _ => None,
                })
                .collect();
            let dropped = total - kept.len();
            Ok((kept, dropped, "from records".into()))
        }
        IppSource::Computed {
            receiver_lat_deg,
            receiver_lon_deg,
            shell,
        } => {
            let kept = records
                .into_iter()
                .map(|r| {
                    let ipp = geo::compute_ipp(
                        *receiver_lat_deg,
                        *receiver_lon_deg,
                        r.elevation_deg,
                        r.azimuth_deg,
                        shell,
                    )?;
                    Ok((r, ipp))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((
                kept,
                0,
                format!(
                    "computed for receiver ({receiver_lat_deg}, {receiver_lon_deg}), shell {} km",
                    shell.shell_height_km
                ),
            ))
        }
    }
}
