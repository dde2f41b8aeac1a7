//! Synthetic multi-site datasets with the statistical shape of real
//! ground/satellite/NWP irradiance channels.
//!
//! The stochastic state is the clear-sky index `k_c`. A latent Gaussian field
//! with a Gaussian spatial kernel evolves as an AR(1) process in time and is
//! mapped to `k_c` by an affine transform clipped to `[0.05, 1.1]`. Every
//! channel is derived from that state:
//!
//! * ground: `I_c * k_c` at the site,
//! * satellite: `I_c * mean(k_c over the pixel)` with multiplicative noise,
//! * NWP: `I_c(t) * (k_c(t) + noise)` with noise growing with the horizon,
//! * temperature and humidity: weather-like signals correlated with `k_c`.
//!
//! Random numbers come from counter-addressed ChaCha streams, one per
//! (label, site or field point, slot), so output does not depend on
//! scheduling.

use chrono::{DateTime, Datelike, Duration, NaiveDate, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{NwpIssue, SiteSeries, HORIZONS};
use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::solar::GeoPoint;

pub const KC_MIN: f64 = 0.05;
pub const KC_MAX: f64 = 1.1;
const NWP_KC_MAX: f64 = 1.2;
const KM_PER_DEG_LAT: f64 = 111.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_sites: usize,
    /// South-west corner.
    pub bbox_min: GeoPoint,
    /// North-east corner.
    pub bbox_max: GeoPoint,
    pub start_date: NaiveDate,
    /// Inclusive.
    pub end_date: NaiveDate,
    pub seed: u64,
    /// Hourly AR(1) coefficient of the latent cloud field.
    pub cloud_persistence: f64,
    /// Distance at which the spatial correlation drops to 1/e.
    pub spatial_corr_km: f64,
    pub sat_noise_rel: f64,
    pub sat_pixel_km: f64,
    /// NWP clear-sky-index error std at horizon 1.
    pub nwp_noise_base_rel: f64,
    /// Additional NWP error std per extra hour of horizon.
    pub nwp_noise_growth_rel: f64,
    pub missing_rate: f64,
    pub kc_mean: f64,
    pub kc_std: f64,
    pub turbidity: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_sites: 30,
            bbox_min: GeoPoint {
                latitude_deg: 50.8,
                longitude_deg: 3.4,
            },
            bbox_max: GeoPoint {
                latitude_deg: 53.4,
                longitude_deg: 7.1,
            },
            start_date: NaiveDate::from_ymd_opt(2014, 1, 1).unwrap(),
            end_date: NaiveDate::from_ymd_opt(2017, 12, 31).unwrap(),
            seed: 2018,
            cloud_persistence: 0.8,
            spatial_corr_km: 80.0,
            sat_noise_rel: 0.05,
            sat_pixel_km: 3.0,
            nwp_noise_base_rel: 0.24,
            nwp_noise_growth_rel: 0.01,
            missing_rate: 0.01,
            kc_mean: 0.62,
            kc_std: 0.3,
            turbidity: crate::solar::DEFAULT_LINKE_TURBIDITY,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let p = |m: String| Err(Error::Parameter(m));
        if self.n_sites == 0 {
            return p("n_sites must be at least 1".into());
        }
        GeoPoint::new(self.bbox_min.latitude_deg, self.bbox_min.longitude_deg)?;
        GeoPoint::new(self.bbox_max.latitude_deg, self.bbox_max.longitude_deg)?;
        if !(self.bbox_min.latitude_deg < self.bbox_max.latitude_deg
            && self.bbox_min.longitude_deg < self.bbox_max.longitude_deg)
        {
            return p(format!(
                "degenerate bounding box {:?} .. {:?}",
                self.bbox_min, self.bbox_max
            ));
        }
        if self.end_date < self.start_date {
            return p("end_date precedes start_date".into());
        }
        if !(0.0..1.0).contains(&self.cloud_persistence) {
            return p(format!("cloud_persistence {} outside [0, 1)", self.cloud_persistence));
        }
        if !(self.spatial_corr_km > 0.0) {
            return p("spatial_corr_km must be positive".into());
        }
        for (name, v) in [
            ("sat_noise_rel", self.sat_noise_rel),
            ("sat_pixel_km", self.sat_pixel_km),
            ("nwp_noise_base_rel", self.nwp_noise_base_rel),
            ("nwp_noise_growth_rel", self.nwp_noise_growth_rel),
            ("kc_std", self.kc_std),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return p(format!("{name} must be a finite non-negative number"));
            }
        }
        if !(0.0..=0.2).contains(&self.missing_rate) {
            return p(format!("missing_rate {} outside [0, 0.2]", self.missing_rate));
        }
        if !(KC_MIN..=KC_MAX).contains(&self.kc_mean) {
            return p(format!("kc_mean {} outside [{KC_MIN}, {KC_MAX}]", self.kc_mean));
        }
        if !(1.0..=10.0).contains(&self.turbidity) {
            return p(format!("turbidity {} outside [1, 10]", self.turbidity));
        }
        Ok(())
    }

    pub fn start(&self) -> DateTime<Utc> {
        Utc.from_utc_datetime(&self.start_date.and_hms_opt(0, 0, 0).unwrap())
    }

    pub fn n_slots(&self) -> usize {
        ((self.end_date - self.start_date).num_days() as usize + 1) * 24
    }
}

/// Labels of every random stream the generator draws from.
pub const STREAM_LABELS: [&str; 10] = [
    "sites",
    "field",
    "sat_noise",
    "nwp_noise",
    "aux_noise",
    "nwp_aux_noise",
    "missing/ground",
    "missing/sat",
    "missing/temp",
    "missing/humidity",
];

/// Counter-addressed random streams derived from one seed.
#[derive(Debug, Clone)]
pub struct StreamFactory {
    key: [u8; 32],
}

impl StreamFactory {
    pub fn new(seed: u64, label: &str) -> Self {
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update(label.as_bytes());
        let mut key = [0u8; 32];
        key.copy_from_slice(&h.finalize());
        Self { key }
    }

    /// Stream for (`stream`, `slot`); each slot owns a disjoint 64-word block,
/// so callers drawing more than that per slot should vary `stream` instead.
    pub fn at(&self, stream: u64, slot: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(stream);
        rng.set_word_pos(u128::from(slot) * 64);
        rng
    }
}

/// A 64-bit seed for the child task named `label`.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn gen_sites(cfg: &SynthConfig) -> Result<Vec<(String, GeoPoint)>> {
    cfg.validate()?;
    let streams = StreamFactory::new(cfg.seed, "sites");
    let width = cfg.n_sites.to_string().len().max(2);
    let (lo, hi) = (cfg.bbox_min, cfg.bbox_max);
    let mut out: Vec<(String, GeoPoint)> = Vec::with_capacity(cfg.n_sites);
    let mut attempt = 0u64;
    while out.len() < cfg.n_sites {
        let mut rng = streams.at(0, attempt);
        attempt += 1;
        // keep a 2% margin so every site is strictly inside the box
        let u: f64 = 0.02 + 0.96 * rng.random::<f64>();
        let v: f64 = 0.02 + 0.96 * rng.random::<f64>();
        let p = GeoPoint {
            latitude_deg: lo.latitude_deg + u * (hi.latitude_deg - lo.latitude_deg),
            longitude_deg: lo.longitude_deg + v * (hi.longitude_deg - lo.longitude_deg),
        };
        if out.iter().any(|(_, q)| q == &p) {
            continue;
        }
        out.push((format!("S{:0width$}", out.len() + 1), p));
    }
    Ok(out)
}

/// Points at which the latent field is sampled: each site, plus sub-pixel
/// points of its satellite cell when pixels have non-zero size.
struct FieldLayout {
    points: Vec<GeoPoint>,
    /// Field point indices averaged into each site's satellite pixel.
    pixel_members: Vec<Vec<usize>>,
}

fn field_layout(cfg: &SynthConfig, sites: &[(String, GeoPoint)]) -> FieldLayout {
    let mut points: Vec<GeoPoint> = sites.iter().map(|(_, p)| *p).collect();
    let mut pixel_members = Vec::with_capacity(sites.len());
    if cfg.sat_pixel_km <= 0.0 {
        pixel_members.extend((0..sites.len()).map(|i| vec![i]));
        return FieldLayout {
            points,
            pixel_members,
        };
    }
    let lat0 = 0.5 * (cfg.bbox_min.latitude_deg + cfg.bbox_max.latitude_deg);
    let dlat = cfg.sat_pixel_km / KM_PER_DEG_LAT;
    let dlon = cfg.sat_pixel_km / (KM_PER_DEG_LAT * lat0.to_radians().cos());
    for (_, p) in sites {
        let cell_lat = ((p.latitude_deg - cfg.bbox_min.latitude_deg) / dlat).floor();
        let cell_lon = ((p.longitude_deg - cfg.bbox_min.longitude_deg) / dlon).floor();
        let base_lat = cfg.bbox_min.latitude_deg + cell_lat * dlat;
        let base_lon = cfg.bbox_min.longitude_deg + cell_lon * dlon;
        let mut members = Vec::with_capacity(4);
        for (fy, fx) in [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)] {
            members.push(points.len());
            points.push(GeoPoint {
                latitude_deg: base_lat + fy * dlat,
                longitude_deg: base_lon + fx * dlon,
            });
        }
        pixel_members.push(members);
    }
    FieldLayout {
        points,
        pixel_members,
    }
}

fn correlation_factor(points: &[GeoPoint], corr_km: f64) -> Result<Cholesky> {
    let n = points.len();
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let d = points[i].distance_km(&points[j]) / corr_km;
            let v = (-d * d).exp();
            c[i * n + j] = v;
            c[j * n + i] = v;
        }
    }
    // Gaussian kernels are badly conditioned for nearby points
    let mut jitter = 1e-10;
    loop {
        let mut a = c.clone();
        for i in 0..n {
            a[i * n + i] += jitter;
        }
        match Cholesky::factor(&a, n, 1e-14) {
            Ok(f) => return Ok(f),
            Err(_) if jitter < 1e-3 => jitter *= 10.0,
            Err(e) => return Err(e),
        }
    }
}

/// Latent AR(1) field mapped to clear-sky index, `[slot][point]`.
fn latent_kc(cfg: &SynthConfig, factor: &Cholesky) -> Vec<Vec<f64>> {
    let n = factor.dim();
    let slots = cfg.n_slots();
    let streams = StreamFactory::new(cfg.seed, "field");
    let innovations: Vec<Vec<f64>> = (0..slots)
        .into_par_iter()
        .map(|t| {
            let eps: Vec<f64> = (0..n)
                .map(|k| streams.at(k as u64, t as u64).sample(StandardNormal))
                .collect();
            factor.mul_lower(&eps)
        })
        .collect();
    let phi = cfg.cloud_persistence;
    let scale = (1.0 - phi * phi).sqrt();
    let mut z = innovations[0].clone();
    let mut out = Vec::with_capacity(slots);
    for (t, eta) in innovations.iter().enumerate() {
        if t > 0 {
            for (zi, ei) in z.iter_mut().zip(eta) {
                *zi = phi * *zi + scale * ei;
            }
        }
        out.push(
            z.iter()
                .map(|zi| (cfg.kc_mean + cfg.kc_std * zi).clamp(KC_MIN, KC_MAX))
                .collect(),
        );
    }
    out
}

/// Clear-sky index of each site at each slot, `[site][slot]`.
pub fn clearsky_index_field(cfg: &SynthConfig, sites: &[(String, GeoPoint)]) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let layout = field_layout(cfg, sites);
    let factor = correlation_factor(&layout.points, cfg.spatial_corr_km)?;
    let kc = latent_kc(cfg, &factor);
    Ok((0..sites.len())
        .map(|s| kc.iter().map(|row| row[s]).collect())
        .collect())
}

/// Truncates to 0.01 so values print compactly and never exceed their bound.
fn quantize(x: f64) -> f64 {
    (x * 100.0).floor() / 100.0
}

pub fn gen_dataset(cfg: &SynthConfig) -> Result<Vec<SiteSeries>> {
    let sites = gen_sites(cfg)?;
    gen_dataset_at(cfg, &sites)
}

/// Generates channels for caller-provided site locations.
pub fn gen_dataset_at(cfg: &SynthConfig, sites: &[(String, GeoPoint)]) -> Result<Vec<SiteSeries>> {
    cfg.validate()?;
    if sites.is_empty() {
        return Err(Error::Parameter("no sites to generate".into()));
    }
    let layout = field_layout(cfg, sites);
    let factor = correlation_factor(&layout.points, cfg.spatial_corr_km)?;
    let kc = latent_kc(cfg, &factor);
    let start = cfg.start();
    let slots = cfg.n_slots();

    let streams: Vec<StreamFactory> = STREAM_LABELS[2..]
        .iter()
        .map(|l| StreamFactory::new(cfg.seed, l))
        .collect();
    let [sat_s, nwp_s, aux_s, nwp_aux_s, miss_g, miss_s, miss_t, miss_h] = &streams[..] else {
        unreachable!()
    };

    sites
        .par_iter()
        .enumerate()
        .map(|(si, (id, loc))| {
            let mut series = SiteSeries::empty(id.clone(), *loc, start, slots, cfg.turbidity)?;
            let sid = si as u64;
            let kc_site: Vec<f64> = kc.iter().map(|row| row[si]).collect();
            let members = &layout.pixel_members[si];
            let mut temps = vec![0.0; slots];
            let mut hums = vec![0.0; slots];
            for t in 0..slots {
                let ic = series.clearsky_ghi[t];
                let tu = t as u64;
                series.ground_ghi[t] = Some(quantize(ic * kc_site[t]));

                let kc_pix = if members.len() == 1 {
                    kc[t][members[0]]
                } else {
                    members.iter().map(|&m| kc[t][m]).sum::<f64>() / members.len() as f64
                };
                let noise: f64 = sat_s.at(sid, tu).sample(StandardNormal);
                let sat = ic * kc_pix * (1.0 + cfg.sat_noise_rel * noise);
                series.sat_ghi[t] = Some(quantize(sat.clamp(0.0, 1.2 * ic)));

                let ts = series.timestamp(t);
                let mut rng = aux_s.at(sid, tu);
                let (e1, e2): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
                let season = (2.0 * std::f64::consts::PI * (f64::from(ts.ordinal()) - 200.0) / 365.25).cos();
                let temp = 10.0 + 7.0 * season + 0.006 * ic * kc_site[t] + 1.5 * e1;
                let hum = (95.0 - 35.0 * kc_site[t] + 6.0 * e2).clamp(5.0, 100.0);
                temps[t] = (temp * 100.0).round() / 100.0;
                hums[t] = (hum * 100.0).round() / 100.0;
            }
            for t in 0..slots {
                let tu = t as u64;
                let draw = |f: &StreamFactory| f.at(sid, tu).random::<f64>() < cfg.missing_rate;
                let (mg, ms, mt, mh) = (draw(miss_g), draw(miss_s), draw(miss_t), draw(miss_h));
                series.temperature[t] = (!mt).then_some(temps[t]);
                series.humidity[t] = (!mh).then_some(hums[t]);
                if mg {
                    series.ground_ghi[t] = None;
                }
                if ms {
                    series.sat_ghi[t] = None;
                }
            }
            for i in 0..slots {
                let mut issue = NwpIssue::default();
                let mut rng = nwp_s.at(sid, i as u64);
                let mut rng_aux = nwp_aux_s.at(sid, i as u64);
                for p in 1..=HORIZONS {
                    let e: f64 = rng.sample(StandardNormal);
                    let (et, eh): (f64, f64) =
                        (rng_aux.sample(StandardNormal), rng_aux.sample(StandardNormal));
                    let target = i + p;
                    if target >= slots {
                        continue;
                    }
                    let sigma = cfg.nwp_noise_base_rel + cfg.nwp_noise_growth_rel * (p as f64 - 1.0);
                    let kc_fc = (kc_site[target] + sigma * e).clamp(0.0, NWP_KC_MAX);
                    let ic = series.clearsky_ghi[target];
                    issue.ghi[p - 1] = Some(quantize(ic * kc_fc));
                    let lead = 0.3 + 0.1 * p as f64;
                    issue.temp[p - 1] = Some(((temps[target] + lead * et) * 100.0).round() / 100.0);
                    issue.humidity[p - 1] =
                        Some(((hums[target] + 4.0 * lead * eh).clamp(0.0, 100.0) * 100.0).round() / 100.0);
                }
                series.nwp[i] = Some(issue);
            }
            Ok(series)
        })
        .collect()
}

/// Timestamp of slot `t` of a generated dataset.
pub fn slot_time(cfg: &SynthConfig, t: usize) -> DateTime<Utc> {
    cfg.start() + Duration::hours(t as i64)
}
