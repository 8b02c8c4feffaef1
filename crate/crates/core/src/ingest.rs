//! Readers for scintillation monitoring records (ISMR-style delimited text)
//! and daily solar-index listings, plus the calendar-day join between them.
//!
//! Column layouts differ between receivers, so nothing about the ISMR layout
//! is hardcoded: a [`ColumnMap`] (normally read from the run configuration)
//! says which column carries which field. Rows that cannot be parsed are
//! quarantined as [`Diagnostic`]s with their line number instead of aborting
//! the whole file.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use chrono::{DateTime, Datelike, Duration, NaiveDate, NaiveDateTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Sentinel used by daily solar listings for a missing F10.7 value.
pub const F107_MISSING_SENTINEL: f64 = 999.0;

/// Canonical column order of the normalized observation CSV.
pub const CANONICAL_COLUMNS: [&str; 7] = [
    "timestamp",
    "sat_id",
    "elevation_deg",
    "azimuth_deg",
    "s4",
    "ipp_lat_deg",
    "ipp_lon_deg",
];

/// One receiver observation.
///
/// `s4` is the receiver-reported amplitude scintillation index (standard
/// deviation of detrended signal power over its mean) and may be negative in
/// raw files. IPP coordinates are present only when the receiver file
/// supplies them; longitude keeps the file's convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScintRecord {
    pub timestamp: DateTime<Utc>,
    pub sat_id: String,
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
    pub s4: f64,
    pub ipp_lat_deg: Option<f64>,
    pub ipp_lon_deg: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolarDay {
    pub date: NaiveDate,
    pub kp: f64,
    pub ssn: f64,
    pub f107: f64,
    pub f107_missing: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    /// 1-based line number in the source.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Delimiter {
    #[default]
    Comma,
    Semicolon,
    Tab,
    Whitespace,
}

impl Delimiter {
    fn split<'a>(&self, line: &'a str) -> Vec<&'a str> {
        match self {
            Delimiter::Comma => line.split(',').map(str::trim).collect(),
            Delimiter::Semicolon => line.split(';').map(str::trim).collect(),
            Delimiter::Tab => line.split('\t').map(str::trim).collect(),
            Delimiter::Whitespace => line.split_whitespace().collect(),
        }
    }
}

/// A column selected by header name or by 0-based position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

impl From<&str> for ColumnRef {
    fn from(s: &str) -> Self {
        ColumnRef::Name(s.to_string())
    }
}

impl From<usize> for ColumnRef {
    fn from(i: usize) -> Self {
        ColumnRef::Index(i)
    }
}

impl ColumnRef {
    fn resolve(&self, header: Option<&[String]>, field: &str) -> Result<usize> {
        match (self, header) {
            (ColumnRef::Index(i), _) => Ok(*i),
            (ColumnRef::Name(name), Some(header)) => header
                .iter()
                .position(|h| h.eq_ignore_ascii_case(name))
                .ok_or_else(|| Error::Format(format!("missing column '{name}' (for field {field}) in header"))),
            (ColumnRef::Name(name), None) => Err(Error::Format(format!(
                "column '{name}' for field {field} is referenced by name but the file has no header"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeColumns {
    /// A single UTC date-time column. Without `format`, RFC 3339 and
    /// `YYYY-MM-DD[T ]HH:MM[:SS]` are accepted.
    Timestamp {
        column: ColumnRef,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        format: Option<String>,
    },
    /// GPS week number and time of week in seconds, converted to UTC.
    GpsWeekTow { week: ColumnRef, tow: ColumnRef },
}

/// Layout of an observation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    #[serde(default)]
    pub delimiter: Delimiter,
    #[serde(default = "yes")]
    pub has_header: bool,
    pub time: TimeColumns,
    pub sat_id: ColumnRef,
    pub elevation: ColumnRef,
    pub azimuth: ColumnRef,
    pub s4: ColumnRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ipp_lat: Option<ColumnRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ipp_lon: Option<ColumnRef>,
}

fn yes() -> bool {
    true
}

impl Default for ColumnMap {
    /// The normalized CSV layout written by [`write_normalized_csv`].
    fn default() -> Self {
        ColumnMap {
            delimiter: Delimiter::Comma,
            has_header: true,
            time: TimeColumns::Timestamp {
                column: "timestamp".into(),
                format: None,
            },
            sat_id: "sat_id".into(),
            elevation: "elevation_deg".into(),
            azimuth: "azimuth_deg".into(),
            s4: "s4".into(),
            ipp_lat: Some("ipp_lat_deg".into()),
            ipp_lon: Some("ipp_lon_deg".into()),
        }
    }
}

impl ColumnMap {
    /// Headerless comma-separated receiver log with week, time of week,
    /// satellite id, (field), azimuth, elevation, (field), total S4 as the
    /// first eight columns.
    pub fn week_tow_ismr() -> Self {
        ColumnMap {
            delimiter: Delimiter::Comma,
            has_header: false,
            time: TimeColumns::GpsWeekTow {
                week: 0.into(),
                tow: 1.into(),
            },
            sat_id: 2.into(),
            azimuth: 4.into(),
            elevation: 5.into(),
            s4: 7.into(),
            ipp_lat: None,
            ipp_lon: None,
        }
    }
}

struct ResolvedMap {
    time: ResolvedTime,
    sat_id: usize,
    elevation: usize,
    azimuth: usize,
    s4: usize,
    ipp_lat: Option<usize>,
    ipp_lon: Option<usize>,
}

enum ResolvedTime {
    Timestamp(usize, Option<String>),
    WeekTow(usize, usize),
}

impl ColumnMap {
    fn resolve(&self, header: Option<&[String]>) -> Result<ResolvedMap> {
        let time = match &self.time {
            TimeColumns::Timestamp { column, format } => {
                ResolvedTime::Timestamp(column.resolve(header, "time")?, format.clone())
            }
            TimeColumns::GpsWeekTow { week, tow } => {
                ResolvedTime::WeekTow(week.resolve(header, "week")?, tow.resolve(header, "tow")?)
            }
        };
        Ok(ResolvedMap {
            time,
            sat_id: self.sat_id.resolve(header, "sat_id")?,
            elevation: self.elevation.resolve(header, "elevation")?,
            azimuth: self.azimuth.resolve(header, "azimuth")?,
            s4: self.s4.resolve(header, "s4")?,
            ipp_lat: self
                .ipp_lat
                .as_ref()
                .map(|c| c.resolve(header, "ipp_lat"))
                .transpose()?,
            ipp_lon: self
                .ipp_lon
                .as_ref()
                .map(|c| c.resolve(header, "ipp_lon"))
                .transpose()?,
        })
    }
}

/// Iterates data lines of a text stream as `(line_number, line)`, skipping
/// blank lines and `#` comments.
fn data_lines<R: BufRead>(source: R) -> impl Iterator<Item = std::io::Result<(usize, String)>> {
    source
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)))
        .filter(|r| match r {
            Ok((_, l)) => {
                let t = l.trim();
                !t.is_empty() && !t.starts_with('#')
            }
            Err(_) => true,
        })
}

fn field<'a>(fields: &[&'a str], idx: usize, name: &str) -> std::result::Result<&'a str, String> {
    fields
        .get(idx)
        .copied()
        .ok_or_else(|| format!("row has {} fields, column {idx} ({name}) missing", fields.len()))
}

fn number(fields: &[&str], idx: usize, name: &str) -> std::result::Result<f64, String> {
    let raw = field(fields, idx, name)?;
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("{name}: '{raw}' is not a finite number")),
    }
}

fn optional_number(fields: &[&str], idx: Option<usize>, name: &str) -> std::result::Result<Option<f64>, String> {
    match idx {
        None => Ok(None),
        Some(i) => match fields.get(i).copied() {
            None | Some("") => Ok(None),
            Some(raw) if raw.eq_ignore_ascii_case("nan") || raw.eq_ignore_ascii_case("na") => Ok(None),
            Some(_) => number(fields, i, name).map(Some),
        },
    }
}

const TIMESTAMP_FORMATS: [&str; 4] = [
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y-%m-%d %H:%M:%S%.f",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
];

fn parse_timestamp(raw: &str, format: Option<&str>) -> std::result::Result<DateTime<Utc>, String> {
    if let Some(fmt) = format {
        return NaiveDateTime::parse_from_str(raw, fmt)
            .map(|t| Utc.from_utc_datetime(&t))
            .map_err(|e| format!("time '{raw}' does not match '{fmt}': {e}"));
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(raw) {
        return Ok(t.with_timezone(&Utc));
    }
    TIMESTAMP_FORMATS
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(raw, fmt).ok())
        .map(|t| Utc.from_utc_datetime(&t))
        .ok_or_else(|| format!("unrecognised time '{raw}'"))
}

/// GPS minus UTC, in seconds, for instants from 2006 on.
fn gps_utc_offset(gps: NaiveDateTime) -> i64 {
    // (GPS-time instant at which the new offset applies, offset)
    const STEPS: [(i32, u32, u32, i64); 4] = [(2017, 1, 1, 18), (2015, 7, 1, 17), (2012, 7, 1, 16), (2009, 1, 1, 15)];
    for (y, m, d, off) in STEPS {
        let at = NaiveDate::from_ymd_opt(y, m, d).unwrap().and_hms_opt(0, 0, 0).unwrap() + Duration::seconds(off);
        if gps >= at {
            return off;
        }
    }
    14
}

pub fn gps_week_tow_to_utc(week: f64, tow: f64) -> std::result::Result<DateTime<Utc>, String> {
    if week < 0.0 || week.fract() != 0.0 || !(0.0..604_800.0).contains(&tow) {
        return Err(format!("invalid GPS week/tow ({week}, {tow})"));
    }
    let epoch = NaiveDate::from_ymd_opt(1980, 1, 6)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap();
    let millis = (tow * 1000.0).round() as i64;
    let gps = epoch + Duration::weeks(week as i64) + Duration::milliseconds(millis);
    Ok(Utc.from_utc_datetime(&(gps - Duration::seconds(gps_utc_offset(gps)))))
}

fn ismr_row(fields: &[&str], map: &ResolvedMap) -> std::result::Result<ScintRecord, String> {
    let timestamp = match &map.time {
        ResolvedTime::Timestamp(i, fmt) => parse_timestamp(field(fields, *i, "time")?, fmt.as_deref())?,
        ResolvedTime::WeekTow(w, t) => gps_week_tow_to_utc(number(fields, *w, "week")?, number(fields, *t, "tow")?)?,
    };
    let sat_id = field(fields, map.sat_id, "sat_id")?;
    if sat_id.is_empty() {
        return Err("empty satellite id".into());
    }
    let elevation_deg = number(fields, map.elevation, "elevation")?;
    if !(0.0..=90.0).contains(&elevation_deg) {
        return Err(format!("elevation {elevation_deg} outside [0, 90]"));
    }
    let azimuth_deg = crate::geo::canonical_lon(number(fields, map.azimuth, "azimuth")?);
    let s4 = number(fields, map.s4, "s4")?;
    let ipp_lat_deg = optional_number(fields, map.ipp_lat, "ipp_lat")?;
    if let Some(lat) = ipp_lat_deg {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(format!("ipp latitude {lat} outside [-90, 90]"));
        }
    }
    let ipp_lon_deg = optional_number(fields, map.ipp_lon, "ipp_lon")?;
    if let Some(lon) = ipp_lon_deg {
        if !(-180.0..360.0).contains(&lon) {
            return Err(format!("ipp longitude {lon} outside [-180, 360)"));
        }
    }
    Ok(ScintRecord {
        timestamp,
        sat_id: sat_id.to_string(),
        elevation_deg,
        azimuth_deg,
        s4,
        ipp_lat_deg,
        ipp_lon_deg,
    })
}

/// Parses an observation stream laid out according to `format`.
///
/// Every data line ends up either as a record or as a diagnostic, in file
/// order. A header that lacks a named column fails the whole parse.
pub fn parse_ismr<R: BufRead>(source: R, format: &ColumnMap) -> Result<Parsed<ScintRecord>> {
    let mut lines = data_lines(source);
    let header: Option<Vec<String>> = if format.has_header {
        match lines.next() {
            Some(line) => {
                let (_, line) = line?;
                Some(format.delimiter.split(&line).into_iter().map(str::to_string).collect())
            }
            None => return Err(Error::Format("empty observation file: header expected".into())),
        }
    } else {
        None
    };
    let map = format.resolve(header.as_deref())?;

    let mut out = Parsed {
        records: Vec::new(),
        diagnostics: Vec::new(),
    };
    for line in lines {
        let (n, line) = line?;
        match ismr_row(&format.delimiter.split(&line), &map) {
            Ok(r) => out.records.push(r),
            Err(message) => out.diagnostics.push(Diagnostic { line: n, message }),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolarDate {
    /// `YYYY-MM-DD` in one column.
    Iso { column: ColumnRef },
    /// Year and day-of-year in two columns.
    YearDoy { year: ColumnRef, doy: ColumnRef },
}

/// Layout of a daily solar-index listing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolarFormat {
    #[serde(default)]
    pub delimiter: Delimiter,
    #[serde(default = "yes")]
    pub has_header: bool,
    pub date: SolarDate,
    pub kp: ColumnRef,
    pub ssn: ColumnRef,
    pub f107: ColumnRef,
    /// Multiplier applied to the raw Kp column (0.1 for listings storing Kp×10).
    #[serde(default = "one")]
    pub kp_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for SolarFormat {
    fn default() -> Self {
        SolarFormat {
            delimiter: Delimiter::Comma,
            has_header: true,
            date: SolarDate::Iso { column: "date".into() },
            kp: "kp".into(),
            ssn: "ssn".into(),
            f107: "f107".into(),
            kp_scale: 1.0,
        }
    }
}

impl SolarFormat {
    /// OMNIWeb daily listing: `YEAR DOY HR Kp*10 R F10.7`, whitespace separated.
    pub fn omniweb() -> Self {
        SolarFormat {
            delimiter: Delimiter::Whitespace,
            has_header: false,
            date: SolarDate::YearDoy {
                year: 0.into(),
                doy: 1.into(),
            },
            kp: 3.into(),
            ssn: 4.into(),
            f107: 5.into(),
            kp_scale: 0.1,
        }
    }
}

fn parse_date(fields: &[&str], date: &ResolvedDate) -> std::result::Result<NaiveDate, String> {
    match date {
        ResolvedDate::Iso(i) => {
            let raw = field(fields, *i, "date")?;
            NaiveDate::parse_from_str(raw, "%Y-%m-%d").map_err(|e| format!("date '{raw}': {e}"))
        }
        ResolvedDate::YearDoy(y, d) => {
            let (ys, ds) = (field(fields, *y, "year")?, field(fields, *d, "doy")?);
            let year: i32 = ys.parse().map_err(|_| format!("year '{ys}' is not an integer"))?;
            let doy: u32 = ds
                .parse()
                .map_err(|_| format!("day of year '{ds}' is not an integer"))?;
            NaiveDate::from_yo_opt(year, doy).ok_or_else(|| format!("no day {doy} in year {year}"))
        }
    }
}

enum ResolvedDate {
    Iso(usize),
    YearDoy(usize, usize),
}

/// Parses a daily solar-index listing with the default CSV layout.
pub fn parse_solar<R: BufRead>(source: R) -> Result<Parsed<SolarDay>> {
    parse_solar_with(source, &SolarFormat::default())
}

/// Parses a daily solar-index listing. A repeated calendar date is a format
/// error; rows with unparseable dates or values become diagnostics.
pub fn parse_solar_with<R: BufRead>(source: R, format: &SolarFormat) -> Result<Parsed<SolarDay>> {
    let mut lines = data_lines(source);
    let header: Option<Vec<String>> = if format.has_header {
        match lines.next() {
            Some(line) => {
                let (_, line) = line?;
                Some(format.delimiter.split(&line).into_iter().map(str::to_string).collect())
            }
            None => return Err(Error::Format("empty solar file: header expected".into())),
        }
    } else {
        None
    };
    let header = header.as_deref();
    let date = match &format.date {
        SolarDate::Iso { column } => ResolvedDate::Iso(column.resolve(header, "date")?),
        SolarDate::YearDoy { year, doy } => {
            ResolvedDate::YearDoy(year.resolve(header, "year")?, doy.resolve(header, "doy")?)
        }
    };
    let (kp, ssn, f107) = (
        format.kp.resolve(header, "kp")?,
        format.ssn.resolve(header, "ssn")?,
        format.f107.resolve(header, "f107")?,
    );

    let mut out = Parsed {
        records: Vec::new(),
        diagnostics: Vec::new(),
    };
    let mut seen: HashMap<NaiveDate, usize> = HashMap::new();
    for line in lines {
        let (n, line) = line?;
        let fields = format.delimiter.split(&line);
        let row = parse_date(&fields, &date).and_then(|date| {
            let f107 = number(&fields, f107, "f107")?;
            Ok(SolarDay {
                date,
                kp: number(&fields, kp, "kp")? * format.kp_scale,
                ssn: number(&fields, ssn, "ssn")?,
                f107,
                f107_missing: f107 == F107_MISSING_SENTINEL,
            })
        });
        match row {
            Ok(day) => {
                if let Some(first) = seen.insert(day.date, n) {
                    return Err(Error::Format(format!(
                        "duplicate solar date {} on lines {first} and {n}",
                        day.date
                    )));
                }
                out.records.push(day);
            }
            Err(message) => out.diagnostics.push(Diagnostic { line: n, message }),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Joined {
    pub pairs: Vec<(ScintRecord, SolarDay)>,
    /// Records whose UTC date has no solar entry.
    pub no_solar_day: usize,
    /// Records whose solar entry has F10.7 missing.
    pub missing_index: usize,
}

/// Pairs each record with the solar indices of its UTC calendar day.
pub fn join_by_day<I>(records: I, solar: &[SolarDay]) -> Joined
where
    I: IntoIterator<Item = ScintRecord>,
{
    let by_date: HashMap<NaiveDate, &SolarDay> = solar.iter().map(|d| (d.date, d)).collect();
    let mut out = Joined::default();
    for rec in records {
        match by_date.get(&rec.timestamp.date_naive()) {
            None => out.no_solar_day += 1,
            Some(day) if day.f107_missing => out.missing_index += 1,
            Some(day) => out.pairs.push((rec, **day)),
        }
    }
    out
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes records as CSV in [`CANONICAL_COLUMNS`] order. Numbers use the
/// shortest representation that parses back to the same `f64`.
pub fn write_normalized_csv<W: Write>(records: &[ScintRecord], mut out: W) -> Result<()> {
    writeln!(out, "{}", CANONICAL_COLUMNS.join(","))?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.timestamp.to_rfc3339_opts(SecondsFormat::AutoSi, true),
            r.sat_id,
            r.elevation_deg,
            r.azimuth_deg,
            r.s4,
            fmt_opt(r.ipp_lat_deg),
            fmt_opt(r.ipp_lon_deg),
        )?;
    }
    Ok(())
}

/// Writes solar days in the default [`SolarFormat`] layout.
pub fn write_solar_csv<W: Write>(days: &[SolarDay], mut out: W) -> Result<()> {
    writeln!(out, "date,kp,ssn,f107")?;
    for d in days {
        writeln!(out, "{},{},{},{}", d.date.format("%Y-%m-%d"), d.kp, d.ssn, d.f107)?;
    }
    Ok(())
}

pub fn write_diagnostics_csv<W: Write>(diagnostics: &[Diagnostic], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["line", "message"])?;
    for d in diagnostics {
        w.write_record([d.line.to_string(), d.message.clone()])?;
    }
    w.flush()?;
    Ok(())
}

/// Day of year (1-366) of a UTC instant.
pub fn day_of_year(t: &DateTime<Utc>) -> u32 {
    t.ordinal()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Timelike;
    use proptest::prelude::*;

    fn parse(text: &str) -> Parsed<ScintRecord> {
        parse_ismr(text.as_bytes(), &ColumnMap::default()).unwrap()
    }

    const HEADER: &str = "timestamp,sat_id,elevation_deg,azimuth_deg,s4,ipp_lat_deg,ipp_lon_deg\n";

    #[test]
    fn passes_fields_through() {
        let p = parse(&format!(
            "{HEADER}2012-03-01T05:30:00Z,G05,45.0,120.5,0.12,-75.5,-170.25\n"
        ));
        assert!(p.diagnostics.is_empty());
        let r = &p.records[0];
        assert_eq!(r.elevation_deg, 45.0);
        assert_eq!(r.s4, 0.12);
        assert_eq!(r.sat_id, "G05");
        assert_eq!(r.ipp_lat_deg, Some(-75.5));
        assert_eq!(r.ipp_lon_deg, Some(-170.25));
        assert_eq!((r.timestamp.hour(), r.timestamp.minute()), (5, 30));
    }

    #[test]
    fn malformed_s4_is_quarantined() {
        let p = parse(&format!("{HEADER}2012-03-01T05:30:00Z,G05,45.0,120.5,NaNX,,\n"));
        assert!(p.records.is_empty());
        assert_eq!(p.diagnostics.len(), 1);
        assert_eq!(p.diagnostics[0].line, 2);
        assert!(p.diagnostics[0].message.contains("s4"));
    }

    #[test]
    fn three_valid_one_malformed() {
        let text = format!(
            "{HEADER}\
             2012-03-01T00:00:00Z,G01,30,10,0.10,,\n\
             2012-03-01T00:01:00Z,G01,31,10,0.11,,\n\
             # receiver restart\n\
             2012-03-01T00:02:00Z,G01,95,10,0.12,,\n\
             2012-03-01T00:03:00Z,G01,33,10,0.13,,\n"
        );
        let p = parse(&text);
        assert_eq!(p.records.len(), 3);
        assert_eq!(p.diagnostics.len(), 1);
        assert_eq!(p.diagnostics[0].line, 5);
    }

    #[test]
    fn missing_header_column_is_named() {
        let err = parse_ismr(
            "timestamp,sat_id,elevation_deg,azimuth_deg\n".as_bytes(),
            &ColumnMap::default(),
        )
        .unwrap_err();
        match err {
            Error::Format(msg) => assert!(msg.contains("'s4'"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unreadable_stream_is_io_error() {
        struct Broken;
        impl std::io::Read for Broken {
            fn read(&mut self, _: &mut [u8]) -> std::io::Result<usize> {
                Err(std::io::Error::other("device gone"))
            }
        }
        let err = parse_ismr(std::io::BufReader::new(Broken), &ColumnMap::default()).unwrap_err();
        assert!(matches!(err, Error::Stream(_)));
    }

    #[test]
    fn week_tow_layout() {
        // week 1669 tow 259200 is 2012-01-04T00:00:00 GPS, 15 s ahead of UTC
        let p = parse_ismr(
            "1669,259200,5,0,120.0,45.0,40,0.25,0.01\n".as_bytes(),
            &ColumnMap::week_tow_ismr(),
        )
        .unwrap();
        let r = &p.records[0];
        assert_eq!(
            r.timestamp.to_rfc3339_opts(SecondsFormat::Secs, true),
            "2012-01-03T23:59:45Z"
        );
        assert_eq!((r.azimuth_deg, r.elevation_deg, r.s4), (120.0, 45.0, 0.25));
        assert_eq!(r.ipp_lat_deg, None);
    }

    #[test]
    fn solar_rows() {
        let p = parse_solar("date,kp,ssn,f107\n2012-03-01,3.2,67,110.4\n2012-03-02,1.0,50,999\n".as_bytes()).unwrap();
        assert_eq!(p.records.len(), 2);
        assert_eq!(p.records[0].kp, 3.2);
        assert_eq!(p.records[0].ssn, 67.0);
        assert_eq!(p.records[0].f107, 110.4);
        assert!(!p.records[0].f107_missing);
        assert!(p.records[1].f107_missing);
    }

    #[test]
    fn solar_duplicate_date_rejected() {
        let err = parse_solar("date,kp,ssn,f107\n2012-03-01,3,67,110\n2012-03-01,2,60,100\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn solar_bad_date_is_diagnostic() {
        let p = parse_solar("date,kp,ssn,f107\n2012-13-01,3,67,110\n2012-03-01,2,60,100\n".as_bytes()).unwrap();
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.diagnostics[0].line, 2);
    }

    #[test]
    fn omniweb_listing() {
        let p = parse_solar_with(
            "2012  61  0 32  67 110.4\n2012  62  0  7  70 999.9\n".as_bytes(),
            &SolarFormat::omniweb(),
        )
        .unwrap();
        assert_eq!(p.records[0].date, NaiveDate::from_ymd_opt(2012, 3, 1).unwrap());
        assert!((p.records[0].kp - 3.2).abs() < 1e-12);
        // only the exact sentinel flags a missing value
        assert!(!p.records[1].f107_missing);
    }

    fn rec(ts: &str) -> ScintRecord {
        ScintRecord {
            timestamp: parse_timestamp(ts, None).unwrap(),
            sat_id: "G01".into(),
            elevation_deg: 40.0,
            azimuth_deg: 0.0,
            s4: 0.1,
            ipp_lat_deg: None,
            ipp_lon_deg: None,
        }
    }

    fn day(date: &str, f107: f64) -> SolarDay {
        SolarDay {
            date: NaiveDate::parse_from_str(date, "%Y-%m-%d").unwrap(),
            kp: 2.0,
            ssn: 50.0,
            f107,
            f107_missing: f107 == F107_MISSING_SENTINEL,
        }
    }

    #[test]
    fn join_matches_and_counts_exclusions() {
        let solar = [day("2012-03-01", 110.0), day("2012-03-02", 999.0)];
        let j = join_by_day(
            vec![
                rec("2012-03-01T23:59:00Z"),
                rec("2012-03-02T00:00:00Z"),
                rec("2012-03-05T12:00:00Z"),
            ],
            &solar,
        );
        assert_eq!(j.pairs.len(), 1);
        assert_eq!(j.pairs[0].1.date, solar[0].date);
        assert_eq!(j.missing_index, 1);
        assert_eq!(j.no_solar_day, 1);
    }

    fn arb_record() -> impl Strategy<Value = ScintRecord> {
        (
            0i64..400_000_000,
            1u8..33,
            0.0f64..=90.0,
            0.0f64..360.0,
            -0.2f64..2.0,
            proptest::option::of(-90.0f64..=90.0),
            proptest::option::of(-180.0f64..360.0),
        )
            .prop_map(|(secs, sv, el, az, s4, lat, lon)| ScintRecord {
                timestamp: Utc.timestamp_opt(1_262_304_000 + secs, 0).unwrap(),
                sat_id: format!("G{sv:02}"),
                elevation_deg: el,
                azimuth_deg: az,
                s4,
                ipp_lat_deg: lat,
                ipp_lon_deg: lon,
            })
    }

    proptest! {
        #[test]
        fn normalized_csv_round_trips_exactly(records in proptest::collection::vec(arb_record(), 0..40)) {
            let mut buf = Vec::new();
            write_normalized_csv(&records, &mut buf).unwrap();
            let p = parse_ismr(buf.as_slice(), &ColumnMap::default()).unwrap();
            prop_assert!(p.diagnostics.is_empty());
            prop_assert_eq!(p.records, records);
        }

        #[test]
        fn every_row_is_accounted_for(rows in proptest::collection::vec(
            prop_oneof![
                Just("2012-01-01T00:00:00Z,G01,45,10,0.2,,".to_string()),
                Just("2012-01-01T00:00:00Z,G01,-5,10,0.2,,".to_string()),
                Just("garbage".to_string()),
                Just("2012-01-01T00:00:00Z,G01,45,10,x,,".to_string()),
            ], 0..50)) {
            let text = format!("{HEADER}{}\n", rows.join("\n"));
            let p = parse(&text);
            prop_assert_eq!(p.records.len() + p.diagnostics.len(), rows.len());
        }

        #[test]
        fn join_never_grows(n in 0usize..30, days in 0u32..5) {
            let solar: Vec<_> = (1..=days).map(|d| day(&format!("2012-03-{d:02}"), 100.0)).collect();
            let recs: Vec<_> = (0..n).map(|i| rec(&format!("2012-03-{:02}T01:00:00Z", i % 6 + 1))).collect();
            let j = join_by_day(recs, &solar);
            prop_assert!(j.pairs.len() <= n);
            prop_assert_eq!(j.pairs.len() + j.no_solar_day + j.missing_index, n);
            for (r, d) in &j.pairs {
                prop_assert_eq!(r.timestamp.date_naive(), d.date);
            }
        }
    }
}
