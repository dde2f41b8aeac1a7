//! Input/target assembly.
//!
//! Feature vectors follow a fixed canonical order:
//!
//! | block           | width      | content                                  |
//! |-----------------|------------|------------------------------------------|
//! | NWP GHI         | 6          | `I_E(h+1) .. I_E(h+6)`                   |
//! | clear-sky       | 6          | `I_c(h+1) .. I_c(h+6)`                   |
//! | current lags    | L          | `I(h), I(h-1) .. I(h-L+1)`               |
//! | daily lags      | 6          | `I(h+1-24) .. I(h+6-24)`                 |
//! | temperature     | L          | `T(h) .. T(h-L+1)`                       |
//! | humidity        | L          | `RH(h) .. RH(h-L+1)`                     |
//! | temp forecast   | 6          | NWP temperature at `h+1 .. h+6`          |
//! | humid forecast  | 6          | NWP humidity at `h+1 .. h+6`             |
//!
//! `I` is the configured lag source (satellite or ground). Only NWP and
//! clear-sky blocks refer to times after the issue hour.

use std::ops::Range;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::dataset::{SiteSeries, SlotMask, HORIZONS};
use crate::error::{Error, Result};

pub const MAX_LAGS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagSource {
    Satellite,
    Ground,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    pub use_nwp: bool,
    pub use_clearsky: bool,
    /// Lagged irradiance from `lag_source`.
    pub use_lags: bool,
    pub use_temp_hist: bool,
    pub use_humid_hist: bool,
    pub use_temp_fc: bool,
    pub use_humid_fc: bool,
    /// Number of current lags `0..L`.
    pub lags_current: usize,
    /// Lag-24 values w.r.t. each prediction hour.
    pub daily_lag: bool,
    pub lag_source: LagSource,
}

impl FeatureConfig {
    /// The selected global-model inputs: NWP, clear-sky, satellite lags 0..3
    /// and the six day-before values.
    pub fn global_default() -> Self {
        Self {
            use_nwp: true,
            use_clearsky: true,
            use_lags: true,
            use_temp_hist: false,
            use_humid_hist: false,
            use_temp_fc: false,
            use_humid_fc: false,
            lags_current: 4,
            daily_lag: true,
            lag_source: LagSource::Satellite,
        }
    }

    /// Same inputs fed from ground telemetry, as used by the local models.
    pub fn local_default() -> Self {
        Self {
            lag_source: LagSource::Ground,
            ..Self::global_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.use_nwp
            || self.use_clearsky
            || self.use_lags
            || self.use_temp_hist
            || self.use_humid_hist
            || self.use_temp_fc
            || self.use_humid_fc)
        {
            return Err(Error::Parameter("feature configuration selects no input".into()));
        }
        if !(1..=MAX_LAGS).contains(&self.lags_current) {
            return Err(Error::Parameter(format!(
                "lags_current {} outside [1, {MAX_LAGS}]",
                self.lags_current
            )));
        }
        Ok(())
    }

    pub fn layout(&self) -> FeatureLayout {
        FeatureLayout::new(self)
    }

    pub fn input_dim(&self) -> usize {
        self.layout().dim
    }
}

/// Index ranges of each block inside a feature vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub nwp: Option<Range<usize>>,
    pub clearsky: Option<Range<usize>>,
    pub lags: Option<Range<usize>>,
    pub daily: Option<Range<usize>>,
    pub temp_hist: Option<Range<usize>>,
    pub humid_hist: Option<Range<usize>>,
    pub temp_fc: Option<Range<usize>>,
    pub humid_fc: Option<Range<usize>>,
    pub dim: usize,
}

impl FeatureLayout {
    fn new(cfg: &FeatureConfig) -> Self {
        let l = cfg.lags_current;
        let mut at = 0;
        let mut block = |on: bool, width: usize| {
            on.then(|| {
                let r = at..at + width;
                at += width;
                r
            })
        };
        let nwp = block(cfg.use_nwp, HORIZONS);
        let clearsky = block(cfg.use_clearsky, HORIZONS);
        let lags = block(cfg.use_lags, l);
        let daily = block(cfg.use_lags && cfg.daily_lag, HORIZONS);
        let temp_hist = block(cfg.use_temp_hist, l);
        let humid_hist = block(cfg.use_humid_hist, l);
        let temp_fc = block(cfg.use_temp_fc, HORIZONS);
        let humid_fc = block(cfg.use_humid_fc, HORIZONS);
        Self {
            nwp,
            clearsky,
            lags,
            daily,
            temp_hist,
            humid_hist,
            temp_fc,
            humid_fc,
            dim: at,
        }
    }

    /// Width of the single-horizon projection produced by [`Self::horizon_view`].
    pub fn horizon_dim(&self) -> usize {
        let per_h = |r: &Option<Range<usize>>| usize::from(r.is_some());
        let all = |r: &Option<Range<usize>>| r.as_ref().map_or(0, |r| r.len());
        per_h(&self.nwp)
            + per_h(&self.clearsky)
            + all(&self.lags)
            + per_h(&self.daily)
            + all(&self.temp_hist)
            + all(&self.humid_hist)
            + per_h(&self.temp_fc)
            + per_h(&self.humid_fc)
    }

    /// Inputs relevant to horizon `p` (1-based): the horizon-`p` entry of each
    /// per-horizon block plus every history block.
    pub fn horizon_view(&self, x: &[f64], p: usize) -> Vec<f64> {
        debug_assert!((1..=HORIZONS).contains(&p));
        let mut out = Vec::with_capacity(self.horizon_dim());
        let pick = |out: &mut Vec<f64>, r: &Option<Range<usize>>| {
            if let Some(r) = r {
                out.push(x[r.start + p - 1]);
            }
        };
        let all = |out: &mut Vec<f64>, r: &Option<Range<usize>>| {
            if let Some(r) = r {
                out.extend_from_slice(&x[r.clone()]);
            }
        };
        pick(&mut out, &self.nwp);
        pick(&mut out, &self.clearsky);
        all(&mut out, &self.lags);
        pick(&mut out, &self.daily);
        all(&mut out, &self.temp_hist);
        all(&mut out, &self.humid_hist);
        pick(&mut out, &self.temp_fc);
        pick(&mut out, &self.humid_fc);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    /// Ground irradiance at `h+1 .. h+6`.
    pub y: [f64; HORIZONS],
    pub site_id: String,
    /// Issue slot `h` in the source series.
    pub slot: usize,
    pub issue_time: DateTime<Utc>,
    /// Whether each target slot passes the retention mask.
    pub target_retained: [bool; HORIZONS],
}

/// Reasons an issue hour produced no sample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SkipCounts {
    pub not_retained: usize,
    pub missing_target: usize,
    pub missing_input: usize,
    pub out_of_range: usize,
}

impl SkipCounts {
    pub fn total(&self) -> usize {
        self.not_retained + self.missing_target + self.missing_input + self.out_of_range
    }
}

#[derive(Debug, Clone)]
pub struct BuiltSamples {
    pub samples: Vec<Sample>,
    pub skipped: SkipCounts,
}

/// One sample per retained issue hour whose inputs and six ground targets are
/// all present. Targets outside `retained` still count as present; their
/// retention is recorded in [`Sample::target_retained`].
pub fn build_samples(series: &SiteSeries, cfg: &FeatureConfig, retained: &SlotMask) -> BuiltSamples {
    build_samples_for(series, cfg, retained, 0..series.len())
}

/// [`build_samples`] restricted to issue slots in `slots`.
pub fn build_samples_for(
    series: &SiteSeries,
    cfg: &FeatureConfig,
    retained: &SlotMask,
    slots: impl IntoIterator<Item = usize>,
) -> BuiltSamples {
    let layout = cfg.layout();
    let source = match cfg.lag_source {
        LagSource::Satellite => &series.sat_ghi,
        LagSource::Ground => &series.ground_ghi,
    };
    let n = series.len();
    let mut samples = Vec::new();
    let mut skipped = SkipCounts::default();
    let l = cfg.lags_current;
    'slots: for h in slots {
        if !retained.get(h) {
            skipped.not_retained += 1;
            continue;
        }
        let needs_history = cfg.use_lags || cfg.use_temp_hist || cfg.use_humid_hist;
        let min_h = match (cfg.use_lags && cfg.daily_lag, needs_history) {
            (true, _) => 24 - 1,
            (false, true) => l - 1,
            _ => 0,
        };
        if h < min_h || h + HORIZONS >= n {
            skipped.out_of_range += 1;
            continue;
        }
        let mut y = [0.0; HORIZONS];
        let mut target_retained = [false; HORIZONS];
        for p in 1..=HORIZONS {
            match series.ground_ghi[h + p] {
                Some(v) => y[p - 1] = v,
                None => {
                    skipped.missing_target += 1;
                    continue 'slots;
                }
            }
            target_retained[p - 1] = retained.get(h + p);
        }

        let mut x = Vec::with_capacity(layout.dim);
        let push_fc = |x: &mut Vec<f64>, f: &dyn Fn(usize) -> Option<f64>| -> bool {
            for p in 1..=HORIZONS {
                match f(p) {
                    Some(v) => x.push(v),
                    None => return false,
                }
            }
            true
        };
        let history = |x: &mut Vec<f64>, chan: &[Option<f64>]| -> bool {
            for k in 0..l {
                match chan[h - k] {
                    Some(v) => x.push(v),
                    None => return false,
                }
            }
            true
        };
        let ok = (!cfg.use_nwp || push_fc(&mut x, &|p| series.nwp_ghi(h, p)))
            && (!cfg.use_clearsky || push_fc(&mut x, &|p| Some(series.clearsky_ghi[h + p])))
            && (!cfg.use_lags || history(&mut x, source))
            && (!(cfg.use_lags && cfg.daily_lag) || push_fc(&mut x, &|p| source[h + p - 24]))
            && (!cfg.use_temp_hist || history(&mut x, &series.temperature))
            && (!cfg.use_humid_hist || history(&mut x, &series.humidity))
            && (!cfg.use_temp_fc || push_fc(&mut x, &|p| series.nwp_lookup(h, p, |r| r.temp)))
            && (!cfg.use_humid_fc || push_fc(&mut x, &|p| series.nwp_lookup(h, p, |r| r.humidity)));
        if !ok {
            skipped.missing_input += 1;
            continue;
        }
        debug_assert_eq!(x.len(), layout.dim);
        samples.push(Sample {
            x,
            y,
            site_id: series.site_id.clone(),
            slot: h,
            issue_time: series.timestamp(h),
            target_retained,
        });
    }
    if skipped.total() > 0 {
        log::debug!(
            "site {}: {} samples built, skipped {:?}",
            series.site_id,
            samples.len(),
            skipped
        );
    }
    BuiltSamples { samples, skipped }
}

/// Per-feature affine standardisation fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Zero-variance features are passed through unscaled.
    pub passthrough: Vec<bool>,
}

impl Normalizer {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut n = 0usize;
        let mut sum: Vec<f64> = Vec::new();
        let mut sumsq: Vec<f64> = Vec::new();
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        for r in &rows {
            if n == 0 {
                sum = vec![0.0; r.len()];
                sumsq = vec![0.0; r.len()];
            } else if r.len() != sum.len() {
                return Err(Error::Contract("rows of unequal width".into()));
            }
            for (i, v) in r.iter().enumerate() {
                sum[i] += v;
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::Parameter("cannot fit normalisation on zero rows".into()));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        for r in &rows {
            for (i, v) in r.iter().enumerate() {
                sumsq[i] += (v - mean[i]).powi(2);
            }
        }
        let std: Vec<f64> = sumsq.iter().map(|s| (s / n as f64).sqrt()).collect();
        let passthrough: Vec<bool> = std
            .iter()
            .zip(&mean)
            .map(|(s, m)| !(*s > 1e-12 * m.abs().max(1.0)))
            .collect();
        let flat = passthrough.iter().filter(|&&p| p).count();
        if flat > 0 {
            log::debug!("{flat} zero-variance feature(s) pass through unscaled");
        }
        Ok(Self {
            mean,
            std,
            passthrough,
        })
    }

    pub fn fit_samples(samples: &[Sample]) -> Result<Self> {
        Self::fit(samples.iter().map(|s| s.x.as_slice()))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            if !self.passthrough[i] {
                *v = (*v - self.mean[i]) / self.std[i];
            }
        }
    }
}

/// Samples tagged with whether normalisation has been applied.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub samples: Vec<Sample>,
    normalized: bool,
}

impl SampleSet {
    pub fn raw(samples: Vec<Sample>) -> Self {
        Self {
            samples,
            normalized: false,
        }
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Applies training statistics to a sample set; targets stay in W/m².
pub fn normalize(set: &mut SampleSet, stats: &Normalizer) -> Result<()> {
    if set.normalized {
        return Err(Error::Contract("sample set is already normalised".into()));
    }
    for s in &mut set.samples {
        if s.x.len() != stats.dim() {
            return Err(Error::Contract(format!(
                "feature width {} does not match normaliser width {}",
                s.x.len(),
                stats.dim()
            )));
        }
        stats.transform(&mut s.x);
    }
    set.normalized = true;
    Ok(())
}
