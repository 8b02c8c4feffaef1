//! Seeded synthetic fixtures.
//!
//! Each class is a Gaussian cluster in pierce-point latitude, longitude and
//! hour of day, with class means `separation` standard units apart and
//! per-row noise of `noise_scale` units. Day of year is uniform over 2012, so
//! the solar indices carry no class signal. S4 is drawn inside the class
//! bin, so labels come out in exactly the requested counts.
//!
//! Contamination rows exercise each filtering step and never reach the
//! output dataset:
//! - low elevation (below 20 degrees)
//! - negative S4
//! - S4 below the 0.05 floor
//! - a 2014 date absent from the solar table
//! - 2013-06-15, present in the solar table with F10.7 missing

use chrono::{Duration, NaiveDate, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::geo::IppCoordinate;
use crate::ingest::{ScintRecord, SolarDay, F107_MISSING_SENTINEL};
use crate::pipeline::{extract_features, Dataset, SeverityClass, MODERATE_UPPER, WEAK_UPPER};
use crate::{seed, Error, Result};

const YEAR: i32 = 2012;
const LAT_CENTRE: f64 = -78.0;
const LAT_UNIT: f64 = 2.0;
const LON_CENTRE: f64 = 166.0;
const LON_UNIT: f64 = 6.0;
const HOD_CENTRE: f64 = 11.5;
const HOD_UNIT: f64 = 3.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contamination {
    #[serde(default)]
    pub low_elevation: usize,
    #[serde(default)]
    pub negative_s4: usize,
    #[serde(default)]
    pub below_floor: usize,
    #[serde(default)]
    pub no_solar_day: usize,
    #[serde(default)]
    pub missing_f107: usize,
}

impl Contamination {
    pub fn total(&self) -> usize {
        self.low_elevation + self.negative_s4 + self.below_floor + self.no_solar_day + self.missing_f107
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_rows: usize,
    /// Weak, moderate, severe.
    pub class_proportions: [f64; 3],
    pub separation: f64,
    pub noise_scale: f64,
    pub seed: u64,
    #[serde(default)]
    pub contamination: Contamination,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_rows: 3000,
            class_proportions: [1.0 / 3.0; 3],
            separation: 4.0,
            noise_scale: 1.0,
            seed: 0,
            contamination: Contamination::default(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let p = self.class_proportions;
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config(format!(
                "class proportions must be non-negative, got {p:?}"
            )));
        }
        if (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("class proportions must sum to 1, got {p:?}")));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::Config(format!(
                "separation must be >= 0, got {}",
                self.separation
            )));
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Config(format!(
                "noise scale must be > 0, got {}",
                self.noise_scale
            )));
        }
        Ok(())
    }

    /// Proportions scaled from absolute counts.
    pub fn proportions_from_counts(counts: [usize; 3]) -> [f64; 3] {
        let total: usize = counts.iter().sum();
        counts.map(|c| c as f64 / total as f64)
    }
}

/// Splits `n` into integer parts proportional to `weights`: floors first,
/// then the leftover units go to the largest fractional remainders, ties to
/// the lower index.
pub fn apportion(n: usize, weights: [f64; 3]) -> [usize; 3] {
    let quotas = weights.map(|w| w * n as f64);
    let mut counts = quotas.map(|q| q.floor() as usize);
    let assigned: usize = counts.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        (quotas[b] - quotas[b].floor())
            .total_cmp(&(quotas[a] - quotas[a].floor()))
            .then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    /// Raw records in file order, contamination included.
    pub records: Vec<ScintRecord>,
    pub solar: Vec<SolarDay>,
    /// The clean rows as features, in record order.
    pub dataset: Dataset,
    pub class_counts: [usize; 3],
}

fn solar_table(rng: &mut seed::Rng) -> Vec<SolarDay> {
    let start = NaiveDate::from_ymd_opt(YEAR, 1, 1).expect("valid date");
    let mut days: Vec<SolarDay> = (0..366)
        .map(|i| SolarDay {
            date: start + Duration::days(i),
            kp: (rng.gen_range(0.0..9.0f64) * 10.0).round() / 10.0,
            ssn: rng.gen_range(20..150) as f64,
            f107: (rng.gen_range(65.0..200.0f64) * 10.0).round() / 10.0,
            f107_missing: false,
        })
        .collect();
    days.push(SolarDay {
        date: missing_f107_date(),
        kp: 2.0,
        ssn: 60.0,
        f107: F107_MISSING_SENTINEL,
        f107_missing: true,
    });
    days
}

fn missing_f107_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2013, 6, 15).expect("valid date")
}

fn no_solar_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2014, 3, 1).expect("valid date")
}

fn s4_in(class: SeverityClass, u: f64) -> f64 {
    match class {
        SeverityClass::Weak => 0.05 + u * (WEAK_UPPER - 0.05 - 1e-3),
        SeverityClass::Moderate => WEAK_UPPER + u * (MODERATE_UPPER - WEAK_UPPER - 1e-3),
        SeverityClass::Severe => MODERATE_UPPER + u * 0.7,
    }
}

struct RowDraw {
    date: NaiveDate,
    s4: f64,
    elevation: f64,
}

fn make_record(spec: &SynthSpec, class: SeverityClass, draw: RowDraw, rng: &mut seed::Rng) -> ScintRecord {
    let offset = (class.index() as f64 - 1.0) * spec.separation;
    let mut g = || -> f64 { rng.sample::<f64, _>(StandardNormal) * spec.noise_scale };
    let lat = (LAT_CENTRE + LAT_UNIT * (offset + g())).clamp(-89.9, -50.0);
    let lon = LON_CENTRE + LON_UNIT * (offset + g());
    let hod = (HOD_CENTRE + HOD_UNIT * (offset + g())).round().clamp(0.0, 23.0) as u32;
    let minute = rng.gen_range(0..60);
    let second = rng.gen_range(0..60);
    let timestamp = Utc.from_utc_datetime(&draw.date.and_hms_opt(hod, minute, second).expect("valid time"));
    let lon = lon.rem_euclid(360.0);
    ScintRecord {
        timestamp,
        sat_id: format!("G{:02}", rng.gen_range(1..=32)),
        elevation_deg: draw.elevation,
        azimuth_deg: (rng.gen_range(0.0..360.0f64) * 100.0).round() / 100.0 % 360.0,
        s4: draw.s4,
        ipp_lat_deg: Some(lat),
        ipp_lon_deg: Some(if lon > 180.0 { lon - 360.0 } else { lon }),
    }
}

pub fn generate(spec: &SynthSpec) -> Result<Synthetic> {
    spec.validate()?;
    let mut rng = seed::rng(seed::derive(spec.seed, "synth"));
    let solar = solar_table(&mut rng);
    let counts = apportion(spec.n_rows, spec.class_proportions);
    let start = NaiveDate::from_ymd_opt(YEAR, 1, 1).expect("valid date");

    let mut labels: Vec<SeverityClass> = SeverityClass::ALL
        .iter()
        .flat_map(|c| std::iter::repeat_n(*c, counts[c.index()]))
        .collect();
    labels.shuffle(&mut rng);

    let mut records = Vec::with_capacity(spec.n_rows + spec.contamination.total());
    for class in labels {
        let draw = RowDraw {
            date: start + Duration::days(rng.gen_range(0..366)),
            s4: s4_in(class, rng.gen()),
            elevation: rng.gen_range(25.0..85.0),
        };
        let rec = make_record(spec, class, draw, &mut rng);
        records.push(rec);
    }

    let c = spec.contamination;
    let mut dirty = Vec::with_capacity(c.total());
    let mut push_dirty = |n: usize, f: &dyn Fn(&mut seed::Rng) -> RowDraw, rng: &mut seed::Rng| {
        for _ in 0..n {
            let draw = f(rng);
            dirty.push(make_record(spec, SeverityClass::Weak, draw, rng));
        }
    };
    let any_day = |rng: &mut seed::Rng| start + Duration::days(rng.gen_range(0..366));
    push_dirty(
        c.low_elevation,
        &|r| RowDraw {
            date: any_day(r),
            s4: s4_in(SeverityClass::Moderate, r.gen()),
            elevation: r.gen_range(1.0..19.5),
        },
        &mut rng,
    );
    push_dirty(
        c.negative_s4,
        &|r| RowDraw {
            date: any_day(r),
            s4: -r.gen_range(0.001..0.1),
            elevation: r.gen_range(25.0..85.0),
        },
        &mut rng,
    );
    push_dirty(
        c.below_floor,
        &|r| RowDraw {
            date: any_day(r),
            s4: r.gen_range(0.0..0.049),
            elevation: r.gen_range(25.0..85.0),
        },
        &mut rng,
    );
    push_dirty(
        c.no_solar_day,
        &|r| RowDraw {
            date: no_solar_date(),
            s4: s4_in(SeverityClass::Severe, r.gen()),
            elevation: r.gen_range(25.0..85.0),
        },
        &mut rng,
    );
    push_dirty(
        c.missing_f107,
        &|r| RowDraw {
            date: missing_f107_date(),
            s4: s4_in(SeverityClass::Severe, r.gen()),
            elevation: r.gen_range(25.0..85.0),
        },
        &mut rng,
    );

    // interleave contamination at seeded positions, keeping clean order
    let total = records.len() + dirty.len();
    let mut is_dirty = vec![false; total];
    for i in rand::seq::index::sample(&mut rng, total, dirty.len()) {
        is_dirty[i] = true;
    }
    let mut clean_iter = records.into_iter();
    let mut dirty_iter = dirty.into_iter();
    let records: Vec<ScintRecord> = is_dirty
        .iter()
        .map(|d| if *d { dirty_iter.next() } else { clean_iter.next() }.expect("counts agree"))
        .collect();

    let by_day: std::collections::HashMap<_, _> = solar.iter().map(|d| (d.date, *d)).collect();
    let rows = records
        .iter()
        .zip(&is_dirty)
        .filter(|(_, d)| !**d)
        .map(|(r, _)| {
            let day = by_day[&r.timestamp.date_naive()];
            let ipp = IppCoordinate {
                lat_deg: r.ipp_lat_deg.expect("synthetic rows carry IPP"),
                lon_deg: r.ipp_lon_deg.expect("synthetic rows carry IPP"),
            };
            (extract_features(r, &day, ipp), crate::pipeline::classify_s4(r.s4))
        })
        .collect();
    let dataset = Dataset::new(rows).with_provenance(format!(
        "synthetic: {} rows, proportions {:?}, separation {}, noise {}, seed {}",
        spec.n_rows, spec.class_proportions, spec.separation, spec.noise_scale, spec.seed
    ));
    Ok(Synthetic {
        records,
        solar,
        dataset,
        class_counts: counts,
    })
}
