//! Error scores and the clear-sky-normalized forecasting skill.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::persistence::CLEARSKY_EPS;

pub mod report;

pub use report::{aggregate_report, CellMetrics, EvalReport, ModelReport};

/// Disjoint window length used for the skill score.
pub const SKILL_WINDOW: usize = 200;

/// One forecast/observation pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub site_id: String,
    pub issue_time: DateTime<Utc>,
    pub horizon: usize,
    pub y_true: f64,
    pub y_pred: f64,
    pub clearsky_at_target: f64,
    /// `k_c(h+p) - k_c(h)`.
    pub clearsky_index_step: f64,
}

/// `100 * RMSE / mean(y)`, in percent.
pub fn rrmse<'a>(records: impl IntoIterator<Item = &'a EvalRecord>) -> Result<f64> {
    let (mut n, mut se, mut sy) = (0usize, 0.0, 0.0);
    for r in records {
        n += 1;
        se += (r.y_true - r.y_pred).powi(2);
        sy += r.y_true;
    }
    if n == 0 {
        return Err(Error::UndefinedMetric("rRMSE of an empty record set".into()));
    }
    let mean = sy / n as f64;
    if !(mean > 0.0) {
        return Err(Error::UndefinedMetric(format!("rRMSE with mean observation {mean}")));
    }
    Ok(100.0 * (se / n as f64).sqrt() / mean)
}

/// Mean of `y - y_pred`, W/m².
pub fn mbe<'a>(records: impl IntoIterator<Item = &'a EvalRecord>) -> Result<f64> {
    let (mut n, mut s) = (0usize, 0.0);
    for r in records {
        n += 1;
        s += r.y_true - r.y_pred;
    }
    if n == 0 {
        return Err(Error::UndefinedMetric("MBE of an empty record set".into()));
    }
    Ok(s / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Skill {
    /// Record-weighted mean of per-window `1 - U/V`, in percent.
    pub percent: f64,
    pub windows: usize,
    pub skipped_windows: usize,
}

/// Forecasting skill `s = 1 - U/V`.
///
/// Records are grouped per (site, horizon) and ordered by issue time. Slots
/// with clear-sky target irradiance at or below `CLEARSKY_EPS` are dropped.
/// Each group is cut into disjoint windows of `window` records (a trailing
/// window with at least two records is kept). Per window
/// `U = rms((y_pred - y) / Ic)` and `V = rms(dk_c)`; windows with `V = 0` are
/// skipped.
pub fn forecast_skill<'a>(records: impl IntoIterator<Item = &'a EvalRecord>, window: usize) -> Result<Skill> {
    if window < 2 {
        return Err(Error::Parameter(format!("skill window must be >= 2, got {window}")));
    }
    let mut groups: BTreeMap<(&str, usize), Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        if r.clearsky_at_target > CLEARSKY_EPS {
            groups.entry((r.site_id.as_str(), r.horizon)).or_default().push(r);
        }
    }
    let (mut weighted, mut weight, mut windows, mut skipped) = (0.0, 0usize, 0usize, 0usize);
    for ((site, p), mut recs) in groups {
        recs.sort_by_key(|r| r.issue_time);
        for chunk in recs.chunks(window) {
            if chunk.len() < 2 {
                continue;
            }
            let n = chunk.len() as f64;
            let u = (chunk
                .iter()
                .map(|r| ((r.y_pred - r.y_true) / r.clearsky_at_target).powi(2))
                .sum::<f64>()
                / n)
                .sqrt();
            let v = (chunk.iter().map(|r| r.clearsky_index_step.powi(2)).sum::<f64>() / n).sqrt();
            if !(v > 0.0) {
                log::debug!("skill window at {site} horizon {p} skipped: no clear-sky index variability");
                skipped += 1;
                continue;
            }
            weighted += (1.0 - u / v) * chunk.len() as f64;
            weight += chunk.len();
            windows += 1;
        }
    }
    if weight == 0 {
        return Err(Error::UndefinedMetric("no skill window with variability".into()));
    }
    Ok(Skill {
        percent: 100.0 * weighted / weight as f64,
        windows,
        skipped_windows: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    pub(crate) fn rec(y: f64, yhat: f64) -> EvalRecord {
        EvalRecord {
            site_id: "A".into(),
            issue_time: Utc.with_ymd_and_hms(2017, 1, 1, 10, 0, 0).unwrap(),
            horizon: 1,
            y_true: y,
            y_pred: yhat,
            clearsky_at_target: 500.0,
            clearsky_index_step: 0.0,
        }
    }

    #[test]
    fn rrmse_examples() {
        assert_eq!(rrmse(&[rec(100.0, 100.0), rec(200.0, 200.0)]).unwrap(), 0.0);
        let r = rrmse(&[rec(100.0, 110.0), rec(200.0, 190.0)]).unwrap();
        assert!((r - 20.0 / 3.0).abs() < 1e-12);
        let r = rrmse(&[rec(100.0, 90.0), rec(100.0, 90.0)]).unwrap();
        assert!((r - 10.0).abs() < 1e-12);
    }

    #[test]
    fn rrmse_undefined() {
        assert!(matches!(rrmse(&[rec(0.0, 1.0)]), Err(Error::UndefinedMetric(_))));
        assert!(matches!(rrmse(&[]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn mbe_examples() {
        assert_eq!(mbe(&[rec(100.0, 110.0), rec(200.0, 190.0)]).unwrap(), 0.0);
        assert_eq!(mbe(&[rec(100.0, 90.0), rec(200.0, 190.0)]).unwrap(), 10.0);
    }

    #[test]
    fn flat_window_is_skipped() {
        let recs = vec![rec(100.0, 90.0), rec(100.0, 95.0)];
        assert!(matches!(forecast_skill(&recs, 200), Err(Error::UndefinedMetric(_))));
    }
}
