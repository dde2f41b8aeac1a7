//! Per-cell and marginal aggregation, and report files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{forecast_skill, mbe, rrmse, EvalRecord};
use crate::dataset::{format_timestamp, parse_timestamp};
use crate::error::{Error, Result};

/// Width of the per-site rRMSE histogram bins, percent.
pub const HISTOGRAM_BIN: f64 = 0.5;

/// Metrics of one record subset; `None` where the metric is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub n: usize,
    pub rrmse: Option<f64>,
    pub mbe: Option<f64>,
    pub skill: Option<f64>,
}

impl CellMetrics {
    pub fn of(records: &[&EvalRecord], window: usize) -> Self {
        let iter = || records.iter().copied();
        Self {
            n: records.len(),
            rrmse: rrmse(iter()).ok(),
            mbe: mbe(iter()).ok(),
            skill: forecast_skill(iter(), window).ok().map(|s| s.percent),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteHorizonCell {
    pub site_id: String,
    pub horizon: usize,
    #[serde(flatten)]
    pub metrics: CellMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: String,
    /// Pooled over every record of the model.
    pub overall: CellMetrics,
    pub by_horizon: BTreeMap<usize, CellMetrics>,
    pub by_site: BTreeMap<String, CellMetrics>,
    pub cells: Vec<SiteHorizonCell>,
    /// `(bin_start, count)` over per-site rRMSE.
    pub histogram: Vec<(f64, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub skill_window: usize,
    pub histogram_bin: f64,
    pub models: Vec<ModelReport>,
}

impl EvalReport {
    pub fn model(&self, name: &str) -> Option<&ModelReport> {
        self.models.iter().find(|m| m.model == name)
    }
}

/// Builds the report from raw records; every number is recomputed from the
/// records it covers.
pub fn aggregate_report(records: &BTreeMap<String, Vec<EvalRecord>>, window: usize) -> Result<EvalReport> {
    if records.values().all(Vec::is_empty) {
        return Err(Error::Parameter("no evaluation records".into()));
    }
    let models = records
        .iter()
        .map(|(name, recs)| model_report(name, recs, window))
        .collect();
    Ok(EvalReport {
        skill_window: window,
        histogram_bin: HISTOGRAM_BIN,
        models,
    })
}

fn model_report(name: &str, recs: &[EvalRecord], window: usize) -> ModelReport {
    let all: Vec<&EvalRecord> = recs.iter().collect();
    let mut by_h: BTreeMap<usize, Vec<&EvalRecord>> = BTreeMap::new();
    let mut by_s: BTreeMap<String, Vec<&EvalRecord>> = BTreeMap::new();
    let mut by_cell: BTreeMap<(String, usize), Vec<&EvalRecord>> = BTreeMap::new();
    for r in recs {
        by_h.entry(r.horizon).or_default().push(r);
        by_s.entry(r.site_id.clone()).or_default().push(r);
        by_cell.entry((r.site_id.clone(), r.horizon)).or_default().push(r);
    }
    let by_site: BTreeMap<String, CellMetrics> = by_s
        .into_iter()
        .map(|(k, v)| (k, CellMetrics::of(&v, window)))
        .collect();
    let histogram = histogram(by_site.values().filter_map(|c| c.rrmse));
    ModelReport {
        model: name.to_string(),
        overall: CellMetrics::of(&all, window),
        by_horizon: by_h
            .into_iter()
            .map(|(k, v)| (k, CellMetrics::of(&v, window)))
            .collect(),
        by_site,
        cells: by_cell
            .into_iter()
            .map(|((site_id, horizon), v)| SiteHorizonCell {
                site_id,
                horizon,
                metrics: CellMetrics::of(&v, window),
            })
            .collect(),
        histogram,
    }
}

/// Contiguous `HISTOGRAM_BIN`-wide bins from the lowest to the highest value.
pub fn histogram(values: impl IntoIterator<Item = f64>) -> Vec<(f64, usize)> {
    let bins: Vec<i64> = values
        .into_iter()
        .map(|v| (v / HISTOGRAM_BIN).floor() as i64)
        .collect();
    let (Some(&lo), Some(&hi)) = (bins.iter().min(), bins.iter().max()) else {
        return Vec::new();
    };
    (lo..=hi)
        .map(|b| (b as f64 * HISTOGRAM_BIN, bins.iter().filter(|&&x| x == b).count()))
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io {
        path: "<csv>".into(),
        source: std::io::Error::other(e),
    }
}

const RECORD_HEADER: [&str; 8] = [
    "model",
    "site_id",
    "issue_time",
    "horizon",
    "y_true",
    "y_pred",
    "clearsky_at_target",
    "clearsky_index_step",
];

pub fn write_records<W: Write>(records: &BTreeMap<String, Vec<EvalRecord>>, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RECORD_HEADER).map_err(csv_err)?;
    for (model, recs) in records {
        for r in recs {
            out.write_record([
                model.clone(),
                r.site_id.clone(),
                format_timestamp(r.issue_time),
                r.horizon.to_string(),
                r.y_true.to_string(),
                r.y_pred.to_string(),
                r.clearsky_at_target.to_string(),
                r.clearsky_index_step.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    out.flush().map_err(|e| Error::io("<csv>", e))
}

pub fn read_records<R: Read>(r: R, name: &str) -> Result<BTreeMap<String, Vec<EvalRecord>>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let parse_err = |line: u64, message: String| Error::Parse {
        file: name.to_string(),
        line: line as usize,
        message,
    };
    let header = rd.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if header.iter().ne(RECORD_HEADER) {
        return Err(parse_err(1, format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut out: BTreeMap<String, Vec<EvalRecord>> = BTreeMap::new();
    for (i, row) in rd.records().enumerate() {
        let line = i as u64 + 2;
        let row = row.map_err(|e| parse_err(line, e.to_string()))?;
        let num = |k: usize| -> Result<f64> {
            row[k]
                .parse::<f64>()
                .map_err(|_| parse_err(line, format!("column {} is not a number: {:?}", RECORD_HEADER[k], &row[k])))
        };
        let issue_time = parse_timestamp(&row[2]).map_err(|m| parse_err(line, m))?;
        let rec = EvalRecord {
            site_id: row[1].to_string(),
            issue_time,
            horizon: row[3]
                .parse()
                .map_err(|_| parse_err(line, format!("bad horizon {:?}", &row[3])))?,
            y_true: num(4)?,
            y_pred: num(5)?,
            clearsky_at_target: num(6)?,
            clearsky_index_step: num(7)?,
        };
        out.entry(row[0].to_string()).or_default().push(rec);
    }
    Ok(out)
}

/// One row per (model, site, horizon).
pub fn write_cells<W: Write>(report: &EvalReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["model", "site_id", "horizon", "n", "rrmse_pct", "mbe_wm2", "skill_pct"])
        .map_err(csv_err)?;
    for m in &report.models {
        for c in &m.cells {
            out.write_record([
                m.model.clone(),
                c.site_id.clone(),
                c.horizon.to_string(),
                c.metrics.n.to_string(),
                opt(c.metrics.rrmse),
                opt(c.metrics.mbe),
                opt(c.metrics.skill),
            ])
            .map_err(csv_err)?;
        }
    }
    out.flush().map_err(|e| Error::io("<csv>", e))
}

pub fn write_histograms<W: Write>(report: &EvalReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["model", "bin_start", "count"]).map_err(csv_err)?;
    for m in &report.models {
        for (b, c) in &m.histogram {
            out.write_record([m.model.clone(), b.to_string(), c.to_string()])
                .map_err(csv_err)?;
        }
    }
    out.flush().map_err(|e| Error::io("<csv>", e))
}

fn fmt_cell(v: Option<f64>, best: bool) -> String {
    match v {
        Some(x) => format!("{x:.2}{}", if best { "*" } else { " " }),
        None => "-".into(),
    }
}

fn best_index(values: &[Option<f64>], key: impl Fn(f64) -> f64) -> Option<usize> {
    values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|x| (i, key(x))))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
}

/// Plain-text tables: overall scores, rRMSE by horizon and rRMSE by site.
/// The best model in each column is starred.
pub fn render_tables(report: &EvalReport) -> String {
    let mut s = String::new();
    let names: Vec<&str> = report.models.iter().map(|m| m.model.as_str()).collect();
    let width = names.iter().map(|n| n.len()).max().unwrap_or(5).max(5);

    let _ = writeln!(s, "Overall");
    let _ = writeln!(s, "{:width$}  {:>10}  {:>10}  {:>10}", "model", "rRMSE %", "skill %", "MBE W/m2");
    let rr: Vec<_> = report.models.iter().map(|m| m.overall.rrmse).collect();
    let sk: Vec<_> = report.models.iter().map(|m| m.overall.skill).collect();
    let mb: Vec<_> = report.models.iter().map(|m| m.overall.mbe).collect();
    let (br, bs, bm) = (best_index(&rr, |x| x), best_index(&sk, |x| -x), best_index(&mb, f64::abs));
    for (i, m) in report.models.iter().enumerate() {
        let _ = writeln!(
            s,
            "{:width$}  {:>10}  {:>10}  {:>10}",
            m.model,
            fmt_cell(rr[i], br == Some(i)),
            fmt_cell(sk[i], bs == Some(i)),
            fmt_cell(mb[i], bm == Some(i)),
        );
    }

    let horizons: Vec<usize> = {
        let mut h: Vec<usize> = report.models.iter().flat_map(|m| m.by_horizon.keys().copied()).collect();
        h.sort_unstable();
        h.dedup();
        h
    };
    let _ = writeln!(s, "\nrRMSE % by horizon");
    let _ = write!(s, "{:width$}", "model");
    for h in &horizons {
        let _ = write!(s, "  {:>8}", format!("{h} h"));
    }
    let _ = writeln!(s);
    let cols: Vec<Vec<Option<f64>>> = horizons
        .iter()
        .map(|h| report.models.iter().map(|m| m.by_horizon.get(h).and_then(|c| c.rrmse)).collect())
        .collect();
    let best: Vec<Option<usize>> = cols.iter().map(|c| best_index(c, |x| x)).collect();
    for (i, m) in report.models.iter().enumerate() {
        let _ = write!(s, "{:width$}", m.model);
        for (j, col) in cols.iter().enumerate() {
            let _ = write!(s, "  {:>8}", fmt_cell(col[i], best[j] == Some(i)));
        }
        let _ = writeln!(s);
    }

    let sites: Vec<&String> = {
        let mut v: Vec<&String> = report.models.iter().flat_map(|m| m.by_site.keys()).collect();
        v.sort();
        v.dedup();
        v
    };
    let _ = writeln!(s, "\nrRMSE % by site");
    let _ = write!(s, "{:8}", "site");
    for n in &names {
        let _ = write!(s, "  {:>w$}", n, w = n.len().max(8));
    }
    let _ = writeln!(s);
    for site in sites {
        let row: Vec<Option<f64>> = report
            .models
            .iter()
            .map(|m| m.by_site.get(site).and_then(|c| c.rrmse))
            .collect();
        let b = best_index(&row, |x| x);
        let _ = write!(s, "{site:8}");
        for (i, n) in names.iter().enumerate() {
            let _ = write!(s, "  {:>w$}", fmt_cell(row[i], b == Some(i)), w = n.len().max(8));
        }
        let _ = writeln!(s);
    }
    s
}
