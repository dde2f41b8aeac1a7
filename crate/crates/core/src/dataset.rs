//! Multi-site hourly data model, CSV ingestion and the temporal/site splits.
//!
//! Every channel is stored on a common hourly UTC grid starting at
//! `SiteSeries::start`. A slot labelled `h` holds the average between `h` and
//! `h + 1`. Missing values are `None`; the clear-sky channel is computed from
//! the site location at ingestion and is never missing.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, TimeZone, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solar::{self, GeoPoint, DEFAULT_LINKE_TURBIDITY};

/// Number of hourly horizons forecast from each issue hour.
pub const HORIZONS: usize = 6;

pub const OBS_HEADER: [&str; 8] = [
    "site_id",
    "timestamp",
    "lat",
    "lon",
    "ghi_ground",
    "ghi_sat",
    "temp",
    "humidity",
];

pub const NWP_HEADER: [&str; 6] = [
    "site_id",
    "issue_time",
    "horizon_h",
    "ghi_nwp",
    "temp_nwp",
    "humidity_nwp",
];

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

/// One NWP issuance: forecasts for the six hours following the issue time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NwpIssue {
    pub ghi: [Option<f64>; HORIZONS],
    pub temp: [Option<f64>; HORIZONS],
    pub humidity: [Option<f64>; HORIZONS],
}

/// Per-slot channels that can carry missing values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Ground,
    Satellite,
    Temperature,
    Humidity,
    ClearSky,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiteSeries {
    pub site_id: String,
    pub location: GeoPoint,
    pub start: DateTime<Utc>,
    pub ground_ghi: Vec<Option<f64>>,
    pub sat_ghi: Vec<Option<f64>>,
    pub temperature: Vec<Option<f64>>,
    pub humidity: Vec<Option<f64>>,
    pub clearsky_ghi: Vec<f64>,
    /// Indexed by issue slot.
    pub nwp: Vec<Option<NwpIssue>>,
}

impl SiteSeries {
    /// An all-missing series of `len` slots with the clear-sky channel filled in.
    pub fn empty(
        site_id: impl Into<String>,
        location: GeoPoint,
        start: DateTime<Utc>,
        len: usize,
        turbidity: f64,
    ) -> Result<Self> {
        if start.minute() != 0 || start.second() != 0 || start.nanosecond() != 0 {
            return Err(Error::Parameter(format!("series start {start} is not on the hour")));
        }
        let clearsky_ghi = (0..len)
            .map(|i| solar::slot_clearsky(location, start + Duration::hours(i as i64), turbidity))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            site_id: site_id.into(),
            location,
            start,
            ground_ghi: vec![None; len],
            sat_ghi: vec![None; len],
            temperature: vec![None; len],
            humidity: vec![None; len],
            clearsky_ghi,
            nwp: vec![None; len],
        })
    }

    pub fn len(&self) -> usize {
        self.clearsky_ghi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn timestamp(&self, slot: usize) -> DateTime<Utc> {
        self.start + Duration::hours(slot as i64)
    }

    pub fn timestamps(&self) -> impl Iterator<Item = DateTime<Utc>> + '_ {
        (0..self.len()).map(|i| self.timestamp(i))
    }

    pub fn slot_of(&self, t: DateTime<Utc>) -> Option<usize> {
        let secs = (t - self.start).num_seconds();
        if secs < 0 || secs % 3600 != 0 {
            return None;
        }
        let slot = (secs / 3600) as usize;
        (slot < self.len()).then_some(slot)
    }

    pub fn channel(&self, channel: Channel) -> Option<&[Option<f64>]> {
        match channel {
            Channel::Ground => Some(&self.ground_ghi),
            Channel::Satellite => Some(&self.sat_ghi),
            Channel::Temperature => Some(&self.temperature),
            Channel::Humidity => Some(&self.humidity),
            Channel::ClearSky => None,
        }
    }

    pub fn value(&self, channel: Channel, slot: usize) -> Option<f64> {
        match channel {
            Channel::ClearSky => self.clearsky_ghi.get(slot).copied(),
            other => self.channel(other).and_then(|c| c.get(slot).copied().flatten()),
        }
    }

    /// NWP value for target `issue + horizon` from the latest issuance at or
    /// before `issue` that still covers that target.
    pub fn nwp_lookup(
        &self,
        issue: usize,
        horizon: usize,
        pick: impl Fn(&NwpIssue) -> [Option<f64>; HORIZONS],
    ) -> Option<f64> {
        debug_assert!((1..=HORIZONS).contains(&horizon));
        let target = issue + horizon;
        let earliest = target.saturating_sub(HORIZONS);
        (earliest..=issue.min(self.len().saturating_sub(1)))
            .rev()
            .find_map(|i| {
                let run = self.nwp[i].as_ref()?;
                pick(run)[target - i - 1]
            })
    }

    pub fn nwp_ghi(&self, issue: usize, horizon: usize) -> Option<f64> {
        self.nwp_lookup(issue, horizon, |r| r.ghi)
    }

    /// Checks the structural invariants of the series.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let lens = [
            self.ground_ghi.len(),
            self.sat_ghi.len(),
            self.temperature.len(),
            self.humidity.len(),
            self.nwp.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::Integrity(format!(
                "site {}: channel lengths {lens:?} differ from grid length {n}",
                self.site_id
            )));
        }
        let irr_ok = |v: &Option<f64>| v.map_or(true, |x| x.is_finite() && x >= 0.0);
        if !self.ground_ghi.iter().all(irr_ok) || !self.sat_ghi.iter().all(irr_ok) {
            return Err(Error::Integrity(format!(
                "site {}: negative or non-finite irradiance",
                self.site_id
            )));
        }
        if !self.clearsky_ghi.iter().all(|x| x.is_finite() && *x >= 0.0) {
            return Err(Error::Integrity(format!("site {}: bad clear-sky value", self.site_id)));
        }
        Ok(())
    }
}

/// Boolean selection over the slots of one series.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotMask(pub Vec<bool>);

impl SlotMask {
    pub fn all(len: usize) -> Self {
        Self(vec![true; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, slot: usize) -> bool {
        self.0.get(slot).copied().unwrap_or(false)
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn and(&self, other: &SlotMask) -> SlotMask {
        assert_eq!(self.len(), other.len(), "mask lengths differ");
        SlotMask(self.0.iter().zip(&other.0).map(|(a, b)| *a && *b).collect())
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i)
    }
}

/// Slots whose midpoint solar elevation is at least `min_elevation_deg`.
pub fn elevation_filter(series: &SiteSeries, min_elevation_deg: f64) -> Result<SlotMask> {
    series
        .timestamps()
        .map(|t| Ok(solar::slot_elevation(series.location, t)? >= min_elevation_deg))
        .collect::<Result<Vec<_>>>()
        .map(SlotMask)
}

/// Slots where every required channel is present.
pub fn drop_incomplete(series: &SiteSeries, required: &[Channel]) -> SlotMask {
    SlotMask(
        (0..series.len())
            .map(|i| required.iter().all(|&c| series.value(c, i).is_some()))
            .collect(),
    )
}

/// Inclusive range of UTC calendar days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        let d = t.date_naive();
        self.start <= d && d <= self.end
    }

    pub fn days(&self) -> i64 {
        (self.end - self.start).num_days() + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitBoundaries {
    pub train: DateRange,
    pub validation: DateRange,
    pub test: DateRange,
}

impl SplitBoundaries {
    fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
    }

    /// Two training years, one validation year, one test year.
    pub fn four_year(first_year: i32) -> Self {
        Self {
            train: DateRange::new(Self::ymd(first_year, 1, 1), Self::ymd(first_year + 1, 12, 31)),
            validation: DateRange::new(
                Self::ymd(first_year + 2, 1, 1),
                Self::ymd(first_year + 2, 12, 31),
            ),
            test: DateRange::new(Self::ymd(first_year + 3, 1, 1), Self::ymd(first_year + 3, 12, 31)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ranges = [self.train, self.validation, self.test];
        for r in &ranges {
            if r.end < r.start {
                return Err(Error::Parameter(format!(
                    "date range {}..{} is reversed",
                    r.start, r.end
                )));
            }
        }
        for w in ranges.windows(2) {
            if w[1].start <= w[0].end {
                return Err(Error::Parameter(format!(
                    "split ranges overlap or are out of order: {}..{} then {}..{}",
                    w[0].start, w[0].end, w[1].start, w[1].end
                )));
            }
        }
        Ok(())
    }
}

impl Default for SplitBoundaries {
    fn default() -> Self {
        Self::four_year(2014)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl DatasetSplit {
    pub fn subset(&self, which: Subset) -> &[usize] {
        match which {
            Subset::Train => &self.train,
            Subset::Validation => &self.validation,
            Subset::Test => &self.test,
        }
    }
}

pub fn split_time(series: &SiteSeries, boundaries: &SplitBoundaries) -> Result<DatasetSplit> {
    boundaries.validate()?;
    let mut split = DatasetSplit::default();
    for (i, t) in series.timestamps().enumerate() {
        if boundaries.train.contains(t) {
            split.train.push(i);
        } else if boundaries.validation.contains(t) {
            split.validation.push(i);
        } else if boundaries.test.contains(t) {
            split.test.push(i);
        }
    }
    Ok(split)
}

/// Which subset, if any, the slot at `t` belongs to.
pub fn subset_of(boundaries: &SplitBoundaries, t: DateTime<Utc>) -> Option<Subset> {
    if boundaries.train.contains(t) {
        Some(Subset::Train)
    } else if boundaries.validation.contains(t) {
        Some(Subset::Validation)
    } else if boundaries.test.contains(t) {
        Some(Subset::Test)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SitePartition {
    pub train_sites: Vec<String>,
    pub eval_sites: Vec<String>,
}

pub fn partition_sites<S: AsRef<str>>(all_sites: &[S], train_ids: &[S]) -> Result<SitePartition> {
    let known: BTreeSet<&str> = all_sites.iter().map(AsRef::as_ref).collect();
    let mut train = Vec::new();
    for id in train_ids {
        let id = id.as_ref();
        if !known.contains(id) {
            return Err(Error::Lookup(format!("training site {id:?} is not loaded")));
        }
        if !train.iter().any(|t: &String| t == id) {
            train.push(id.to_string());
        }
    }
    let eval_sites = all_sites
        .iter()
        .map(AsRef::as_ref)
        .filter(|s| !train.iter().any(|t| t == s))
        .map(str::to_string)
        .collect();
    Ok(SitePartition {
        train_sites: train,
        eval_sites,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    /// Sort rows per site instead of rejecting out-of-order timestamps.
    pub canonicalize_order: bool,
    pub turbidity: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            canonicalize_order: false,
            turbidity: DEFAULT_LINKE_TURBIDITY,
        }
    }
}

struct ObsRow {
    line: usize,
    time: DateTime<Utc>,
    location: GeoPoint,
    ground: Option<f64>,
    sat: Option<f64>,
    temp: Option<f64>,
    humidity: Option<f64>,
}

struct NwpRow {
    line: usize,
    issue: DateTime<Utc>,
    horizon: usize,
    ghi: Option<f64>,
    temp: Option<f64>,
    humidity: Option<f64>,
}

#[derive(Default)]
struct Staging {
    obs: BTreeMap<String, Vec<(String, ObsRow)>>,
    nwp: BTreeMap<String, Vec<(String, NwpRow)>>,
}

pub fn parse_timestamp(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    let naive = NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
        .map_err(|e| format!("bad timestamp {s:?}: {e}"))?;
    if naive.minute() != 0 || naive.second() != 0 {
        return Err(format!("timestamp {s:?} is not on the hour"));
    }
    Ok(Utc.from_utc_datetime(&naive))
}

pub fn format_timestamp(t: DateTime<Utc>) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

fn parse_opt(s: &str, what: &str) -> std::result::Result<Option<f64>, String> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    let v: f64 = s.parse().map_err(|_| format!("bad {what} value {s:?}"))?;
    if !v.is_finite() {
        return Err(format!("non-finite {what} value {s:?}"));
    }
    Ok(Some(v))
}

fn parse_irradiance(s: &str, what: &str) -> std::result::Result<Option<f64>, String> {
    let v = parse_opt(s, what)?;
    if matches!(v, Some(x) if x < 0.0) {
        return Err(format!("negative {what} value {s:?}"));
    }
    Ok(v)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn stage_reader<R: Read>(reader: R, name: &str, staging: &mut Staging) -> Result<()> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let perr = |line: usize, message: String| Error::Parse {
        file: name.to_string(),
        line,
        message,
    };
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| perr(1, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let is_obs = header == OBS_HEADER;
    let is_nwp = header == NWP_HEADER;
    if !is_obs && !is_nwp {
        return Err(perr(
            1,
            format!(
                "unrecognised header {header:?}; expected {} or {}",
                OBS_HEADER.join(","),
                NWP_HEADER.join(",")
            ),
        ));
    }
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            perr(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let site = field(0).to_string();
        if site.is_empty() {
            return Err(perr(line, "empty site_id".into()));
        }
        if is_obs {
            let time = parse_timestamp(field(1)).map_err(|m| perr(line, m))?;
            let lat = parse_opt(field(2), "lat").map_err(|m| perr(line, m))?;
            let lon = parse_opt(field(3), "lon").map_err(|m| perr(line, m))?;
            let (Some(lat), Some(lon)) = (lat, lon) else {
                return Err(perr(line, "lat/lon are mandatory".into()));
            };
            let location = GeoPoint::new(lat, lon).map_err(|e| perr(line, e.to_string()))?;
            let row = ObsRow {
                line,
                time,
                location,
                ground: parse_irradiance(field(4), "ghi_ground").map_err(|m| perr(line, m))?,
                sat: parse_irradiance(field(5), "ghi_sat").map_err(|m| perr(line, m))?,
                temp: parse_opt(field(6), "temp").map_err(|m| perr(line, m))?,
                humidity: parse_opt(field(7), "humidity").map_err(|m| perr(line, m))?,
            };
            staging.obs.entry(site).or_default().push((name.to_string(), row));
        } else {
            let issue = parse_timestamp(field(1)).map_err(|m| perr(line, m))?;
            let horizon: usize = field(2)
                .parse()
                .map_err(|_| perr(line, format!("bad horizon_h {:?}", field(2))))?;
            if !(1..=HORIZONS).contains(&horizon) {
                return Err(perr(line, format!("horizon_h {horizon} outside 1..={HORIZONS}")));
            }
            let row = NwpRow {
                line,
                issue,
                horizon,
                ghi: parse_irradiance(field(3), "ghi_nwp").map_err(|m| perr(line, m))?,
                temp: parse_opt(field(4), "temp_nwp").map_err(|m| perr(line, m))?,
                humidity: parse_opt(field(5), "humidity_nwp").map_err(|m| perr(line, m))?,
            };
            staging.nwp.entry(site).or_default().push((name.to_string(), row));
        }
    }
    Ok(())
}

fn assemble(staging: Staging, opts: &LoadOptions) -> Result<Vec<SiteSeries>> {
    let mut out = Vec::with_capacity(staging.obs.len());
    let mut nwp = staging.nwp;
    for (site, mut rows) in staging.obs {
        if opts.canonicalize_order {
            rows.sort_by_key(|(_, r)| r.time);
        }
        for w in rows.windows(2) {
            let (file, r) = &w[1];
            if r.time == w[0].1.time {
                return Err(Error::Integrity(format!(
                    "{file}:{}: duplicate timestamp {} for site {site}",
                    r.line,
                    format_timestamp(r.time)
                )));
            }
            if r.time < w[0].1.time {
                return Err(Error::Integrity(format!(
                    "{file}:{}: timestamp {} precedes the previous row for site {site}",
                    r.line,
                    format_timestamp(r.time)
                )));
            }
        }
        let first = &rows[0].1;
        let location = first.location;
        if let Some((file, r)) = rows.iter().find(|(_, r)| r.location != location) {
            return Err(Error::Integrity(format!(
                "{file}:{}: site {site} changes coordinates",
                r.line
            )));
        }
        let start = first.time;
        let len = ((rows.last().unwrap().1.time - start).num_hours() + 1) as usize;
        let mut series = SiteSeries::empty(site.clone(), location, start, len, opts.turbidity)?;
        for (_, r) in &rows {
            let i = series.slot_of(r.time).expect("row inside grid");
            series.ground_ghi[i] = r.ground;
            series.sat_ghi[i] = r.sat;
            series.temperature[i] = r.temp;
            series.humidity[i] = r.humidity;
        }
        if let Some(runs) = nwp.remove(&site) {
            let mut seen = BTreeSet::new();
            for (file, r) in runs {
                if !seen.insert((r.issue, r.horizon)) {
                    return Err(Error::Integrity(format!(
                        "{file}:{}: duplicate NWP row ({site}, {}, {})",
                        r.line,
                        format_timestamp(r.issue),
                        r.horizon
                    )));
                }
                let Some(i) = series.slot_of(r.issue) else {
                    log::debug!("{file}:{}: NWP issue time outside the observation grid", r.line);
                    continue;
                };
                let run = series.nwp[i].get_or_insert_with(NwpIssue::default);
                run.ghi[r.horizon - 1] = r.ghi;
                run.temp[r.horizon - 1] = r.temp;
                run.humidity[r.horizon - 1] = r.humidity;
            }
        }
        series.validate()?;
        out.push(series);
    }
    if let Some((site, rows)) = nwp.into_iter().next() {
        let (file, r) = &rows[0];
        return Err(Error::Lookup(format!(
            "{file}:{}: NWP rows for site {site} without observations",
            r.line
        )));
    }
    Ok(out)
}

/// Loads observation and NWP CSV files into one series per site.
pub fn load_sites<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<SiteSeries>> {
    load_sites_with(paths, &LoadOptions::default())
}

pub fn load_sites_with<P: AsRef<Path>>(paths: &[P], opts: &LoadOptions) -> Result<Vec<SiteSeries>> {
    let mut staging = Staging::default();
    for path in paths {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        stage_reader(std::io::BufReader::new(file), &path.display().to_string(), &mut staging)?;
    }
    assemble(staging, opts)
}

/// Same as [`load_sites_with`] over in-memory sources, each paired with a
/// display name used in diagnostics.
pub fn load_readers<R: Read>(sources: Vec<(String, R)>, opts: &LoadOptions) -> Result<Vec<SiteSeries>> {
    let mut staging = Staging::default();
    for (name, r) in sources {
        stage_reader(r, &name, &mut staging)?;
    }
    assemble(staging, opts)
}

pub fn write_observations<W: Write>(sites: &[SiteSeries], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Integrity(format!("csv write failed: {e}"));
    w.write_record(OBS_HEADER).map_err(csv_err)?;
    for s in sites {
        let lat = s.location.latitude_deg.to_string();
        let lon = s.location.longitude_deg.to_string();
        for i in 0..s.len() {
            w.write_record([
                s.site_id.as_str(),
                &format_timestamp(s.timestamp(i)),
                &lat,
                &lon,
                &fmt_opt(s.ground_ghi[i]),
                &fmt_opt(s.sat_ghi[i]),
                &fmt_opt(s.temperature[i]),
                &fmt_opt(s.humidity[i]),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn write_nwp<W: Write>(sites: &[SiteSeries], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Integrity(format!("csv write failed: {e}"));
    w.write_record(NWP_HEADER).map_err(csv_err)?;
    for s in sites {
        for (i, run) in s.nwp.iter().enumerate() {
            let Some(run) = run else { continue };
            let issue = format_timestamp(s.timestamp(i));
            for p in 0..HORIZONS {
                if run.ghi[p].is_none() && run.temp[p].is_none() && run.humidity[p].is_none() {
                    continue;
                }
                w.write_record([
                    s.site_id.as_str(),
                    &issue,
                    &(p + 1).to_string(),
                    &fmt_opt(run.ghi[p]),
                    &fmt_opt(run.temp[p]),
                    &fmt_opt(run.humidity[p]),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
