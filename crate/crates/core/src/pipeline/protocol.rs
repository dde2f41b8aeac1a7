//! The benchmark protocol on in-memory data: sample assembly, training of
//! every model family and evaluation on common targets.

use std::collections::{BTreeMap, BTreeSet};

use chrono::Timelike;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::dataset::{
    drop_incomplete, elevation_filter, partition_sites, subset_of, Channel, SitePartition, SiteSeries, SlotMask,
    SplitBoundaries, Subset, HORIZONS,
};
use crate::error::{Error, Result};
use crate::features::{build_samples_for, FeatureConfig, Sample};
use crate::metrics::{aggregate_report, rrmse, EvalRecord, EvalReport};
use crate::models::mlp::TrainData;
use crate::models::persistence::{clearsky_index, persistence_forecast};
use crate::models::suite::{
    train_global, train_keyed_suite, train_local_mlps, GlobalMlp, KeyedFamily, KeyedParams, KeyedSuite, SiteMlp,
    SiteSamples,
};
use crate::synth::derive_seed;

use super::config::{hex, RunConfig};
use super::Family;

/// Loaded series with their retention masks and the site partition.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub series: Vec<SiteSeries>,
    /// Issue/target slots passing the elevation filter with ground and
    /// satellite values present.
    pub retained: Vec<SlotMask>,
    pub split: SplitBoundaries,
    pub partition: SitePartition,
    pub issue_hours: Vec<u32>,
}

impl Prepared {
    pub fn new(series: Vec<SiteSeries>, cfg: &RunConfig) -> Result<Self> {
        cfg.split.validate()?;
        if series.is_empty() {
            return Err(Error::Parameter("no sites loaded".into()));
        }
        let ids: Vec<String> = series.iter().map(|s| s.site_id.clone()).collect();
        let train_ids: Vec<String> = if cfg.train_sites.is_empty() {
            ids.iter().take(5.min(ids.len().saturating_sub(1)).max(1)).cloned().collect()
        } else {
            cfg.train_sites.clone()
        };
        let partition = partition_sites(&ids, &train_ids)?;
        let retained = series
            .par_iter()
            .map(|s| {
                Ok(elevation_filter(s, cfg.min_elevation_deg)?
                    .and(&drop_incomplete(s, &[Channel::Ground, Channel::Satellite])))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            series,
            retained,
            split: cfg.split,
            partition,
            issue_hours: cfg.issue_hours.clone(),
        })
    }

    pub fn site_index(&self, id: &str) -> Result<usize> {
        self.series
            .iter()
            .position(|s| s.site_id == id)
            .ok_or_else(|| Error::Lookup(format!("site {id:?} is not loaded")))
    }

    /// Slots of `site` in `subset`, optionally limited to issue hours.
    pub fn slots(&self, site: usize, subset: Subset, issue_only: bool) -> Vec<usize> {
        let s = &self.series[site];
        (0..s.len())
            .filter(|&i| {
                let t = s.timestamp(i);
                subset_of(&self.split, t) == Some(subset) && (!issue_only || self.issue_hours.contains(&t.hour()))
            })
            .collect()
    }

    pub fn samples(&self, site: usize, features: &FeatureConfig, subset: Subset, issue_only: bool) -> Vec<Sample> {
        let slots = self.slots(site, subset, issue_only);
        build_samples_for(&self.series[site], features, &self.retained[site], slots).samples
    }

    /// Training and validation samples for each named site.
    pub fn site_samples(&self, ids: &[String], features: &FeatureConfig, issue_only: bool) -> Result<Vec<SiteSamples>> {
        ids.par_iter()
            .map(|id| {
                let i = self.site_index(id)?;
                Ok(SiteSamples {
                    site_id: id.clone(),
                    train: self.samples(i, features, Subset::Train, issue_only),
                    validation: self.samples(i, features, Subset::Validation, issue_only),
                })
            })
            .collect()
    }

    /// Hex SHA-256 identifying the train/eval site partition.
    pub fn partition_hash(&self) -> String {
        partition_hash(&self.partition)
    }
}

pub fn partition_hash(p: &SitePartition) -> String {
    let mut h = Sha256::new();
    h.update(p.train_sites.join(",").as_bytes());
    h.update(b"|");
    h.update(p.eval_sites.join(",").as_bytes());
    hex(&h.finalize())
}

#[derive(Debug, Clone)]
pub enum TrainedModel {
    Persistence,
    Nwp,
    Keyed(KeyedSuite),
    LocalDnn(Vec<SiteMlp>),
    GlobalDnn(GlobalMlp),
}

impl TrainedModel {
    pub fn family(&self) -> Family {
        match self {
            TrainedModel::Persistence => Family::Persistence,
            TrainedModel::Nwp => Family::Nwp,
            TrainedModel::Keyed(s) => match s.family {
                KeyedFamily::Linear => Family::Linear,
                KeyedFamily::Gbt => Family::Gbt,
            },
            TrainedModel::LocalDnn(_) => Family::LocalDnn,
            TrainedModel::GlobalDnn(_) => Family::GlobalDnn,
        }
    }
}

/// Trains one family. Local families are fitted on the evaluation sites,
/// the global model on the training sites.
pub fn train_family(prep: &Prepared, family: Family, cfg: &RunConfig) -> Result<TrainedModel> {
    let eval = &prep.partition.eval_sites;
    Ok(match family {
        Family::Persistence => TrainedModel::Persistence,
        Family::Nwp => TrainedModel::Nwp,
        Family::Linear | Family::Gbt => {
            let (kind, features, params) = if family == Family::Linear {
                let params = KeyedParams {
                    lambda: cfg.linear.lambda,
                    ..KeyedParams::default()
                };
                (KeyedFamily::Linear, cfg.linear.features, params)
            } else {
                let params = KeyedParams {
                    gbt: cfg.gbt.params,
                    ..KeyedParams::default()
                };
                (KeyedFamily::Gbt, cfg.gbt.features, params)
            };
            let sites = prep.site_samples(eval, &features, true)?;
            TrainedModel::Keyed(train_keyed_suite(&sites, kind, &features, &params)?)
        }
        Family::LocalDnn => {
            let s = &cfg.local_dnn;
            let sites = prep.site_samples(eval, &s.features, false)?;
            let train = crate::models::mlp::TrainConfig {
                seed: derive_seed(cfg.seed, "local-dnn"),
                ..s.train.clone()
            };
            TrainedModel::LocalDnn(train_local_mlps(&sites, &s.features, &s.hidden, &train)?)
        }
        Family::GlobalDnn => {
            let s = &cfg.global_dnn;
            let sites = prep.site_samples(&prep.partition.train_sites, &s.features, false)?;
            let train = crate::models::mlp::TrainConfig {
                seed: derive_seed(cfg.seed, "global-dnn"),
                ..s.train.clone()
            };
            TrainedModel::GlobalDnn(train_global(&sites, &s.features, &s.hidden, &train)?)
        }
    })
}

/// Forecasts keyed by (site index, issue slot, horizon).
pub type Forecasts = BTreeMap<(usize, usize, usize), f64>;

fn target_ok(prep: &Prepared, site: usize, h: usize, p: usize) -> bool {
    let s = &prep.series[site];
    h + p < s.len() && prep.retained[site].get(h + p) && s.ground_ghi[h + p].is_some()
}

fn sample_forecasts(
    prep: &Prepared,
    site: usize,
    features: &FeatureConfig,
    subset: Subset,
    predict: impl Fn(&[Sample]) -> Result<Vec<[Option<f64>; HORIZONS]>>,
) -> Result<Vec<((usize, usize, usize), f64)>> {
    let samples = prep.samples(site, features, subset, true);
    let preds = predict(&samples)?;
    let mut out = Vec::new();
    for (s, pred) in samples.iter().zip(preds) {
        for p in 1..=HORIZONS {
            if let Some(v) = pred[p - 1] {
                if s.target_retained[p - 1] {
                    out.push(((site, s.slot, p), v));
                }
            }
        }
    }
    Ok(out)
}

fn mlp_batch(
    normalizer: &crate::features::Normalizer,
    model: &crate::models::mlp::MlpModel,
    samples: &[Sample],
) -> Vec<[Option<f64>; HORIZONS]> {
    if samples.is_empty() {
        return Vec::new();
    }
    let mut data = TrainData::from_samples(samples);
    for mut row in data.x.rows_mut() {
        normalizer.transform(row.as_slice_mut().expect("standard layout"));
    }
    let out = model.forward_batch(data.x.view());
    out.rows()
        .into_iter()
        .map(|r| std::array::from_fn(|j| Some(r[j])))
        .collect()
}

/// Forecasts of `model` for every evaluable target of `sites` in `subset`.
pub fn forecast(prep: &Prepared, model: &TrainedModel, sites: &[usize], subset: Subset) -> Result<Forecasts> {
    let per_site: Vec<Vec<((usize, usize, usize), f64)>> = sites
        .par_iter()
        .map(|&site| -> Result<_> {
            let s = &prep.series[site];
            match model {
                TrainedModel::Persistence | TrainedModel::Nwp => {
                    let mut out = Vec::new();
                    for h in prep.slots(site, subset, true) {
                        if !prep.retained[site].get(h) {
                            continue;
                        }
                        for p in 1..=HORIZONS {
                            if !target_ok(prep, site, h, p) {
                                continue;
                            }
                            let v = match model {
                                TrainedModel::Persistence => {
                                    let i_h = s.ground_ghi[h].expect("retained slot has ground data");
                                    Some(persistence_forecast(i_h, s.clearsky_ghi[h], s.clearsky_ghi[h + p]).value)
                                }
                                _ => s.nwp_ghi(h, p),
                            };
                            if let Some(v) = v {
                                out.push(((site, h, p), v));
                            }
                        }
                    }
                    Ok(out)
                }
                TrainedModel::Keyed(suite) => sample_forecasts(prep, site, &suite.features, subset, |samples| {
                    Ok(samples.iter().map(|x| suite.predict(x)).collect())
                }),
                TrainedModel::LocalDnn(models) => {
                    let Some(m) = models.iter().find(|m| m.site_id == s.site_id) else {
                        return Ok(Vec::new());
                    };
                    sample_forecasts(prep, site, &m.features, subset, |samples| {
                        Ok(mlp_batch(&m.normalizer, &m.model, samples))
                    })
                }
                TrainedModel::GlobalDnn(g) => sample_forecasts(prep, site, &g.features, subset, |samples| {
                    Ok(mlp_batch(&g.normalizer, &g.model, samples))
                }),
            }
        })
        .collect::<Result<_>>()?;
    Ok(per_site.into_iter().flatten().collect())
}

/// Evaluation records for each model over the targets every model covers.
/// Negative forecasts are clipped to zero here.
pub fn common_records(prep: &Prepared, forecasts: &BTreeMap<String, Forecasts>) -> BTreeMap<String, Vec<EvalRecord>> {
    let mut common: Option<BTreeSet<(usize, usize, usize)>> = None;
    for f in forecasts.values() {
        let keys: BTreeSet<_> = f.keys().copied().collect();
        common = Some(match common {
            None => keys,
            Some(c) => c.intersection(&keys).copied().collect(),
        });
    }
    let common = common.unwrap_or_default();
    forecasts
        .iter()
        .map(|(name, f)| {
            let mut clipped = 0usize;
            let recs: Vec<EvalRecord> = common
                .iter()
                .map(|&(site, h, p)| {
                    let s = &prep.series[site];
                    let y = s.ground_ghi[h + p].expect("target has ground data");
                    let y0 = s.ground_ghi[h].expect("issue slot has ground data");
                    let (ic, ic0) = (s.clearsky_ghi[h + p], s.clearsky_ghi[h]);
                    let mut pred = f[&(site, h, p)];
                    if pred < 0.0 {
                        pred = 0.0;
                        clipped += 1;
                    }
                    EvalRecord {
                        site_id: s.site_id.clone(),
                        issue_time: s.timestamp(h),
                        horizon: p,
                        y_true: y,
                        y_pred: pred,
                        clearsky_at_target: ic,
                        clearsky_index_step: clearsky_index(y, ic) - clearsky_index(y0, ic0),
                    }
                })
                .collect();
            if clipped > 0 {
                log::info!("{name}: clipped {clipped} negative forecasts to zero");
            }
            (name.clone(), recs)
        })
        .collect()
}

/// Validation-split rRMSE of a model over the given sites.
pub fn validation_rrmse(prep: &Prepared, model: &TrainedModel, sites: &[String]) -> Result<f64> {
    let idx = sites.iter().map(|s| prep.site_index(s)).collect::<Result<Vec<_>>>()?;
    let f = forecast(prep, model, &idx, Subset::Validation)?;
    let recs = common_records(prep, &BTreeMap::from([(String::new(), f)]));
    rrmse(recs[""].iter())
}

#[derive(Debug)]
pub struct ProtocolOutcome {
    pub models: BTreeMap<Family, TrainedModel>,
    pub records: BTreeMap<String, Vec<EvalRecord>>,
    pub report: EvalReport,
}

/// Test-split evaluation of trained models on the evaluation sites.
pub fn evaluate_models(prep: &Prepared, models: &[&TrainedModel], window: usize) -> Result<(BTreeMap<String, Vec<EvalRecord>>, EvalReport)> {
    if let Some(g) = models.iter().find_map(|m| match m {
        TrainedModel::GlobalDnn(g) => Some(g),
        _ => None,
    }) {
        if let Some(s) = g.train_sites.iter().find(|s| prep.partition.eval_sites.contains(s)) {
            return Err(Error::Integrity(format!("global model was trained on evaluation site {s}")));
        }
    }
    let eval = prep
        .partition
        .eval_sites
        .iter()
        .map(|s| prep.site_index(s))
        .collect::<Result<Vec<_>>>()?;
    let mut forecasts = BTreeMap::new();
    for m in models {
        forecasts.insert(m.family().name().to_string(), forecast(prep, m, &eval, Subset::Test)?);
    }
    let records = common_records(prep, &forecasts);
    if records.values().all(Vec::is_empty) {
        return Err(Error::Parameter("no test targets to evaluate".into()));
    }
    let report = aggregate_report(&records, window)?;
    Ok((records, report))
}

/// Trains every configured family and evaluates them on the test split.
pub fn run_protocol(series: Vec<SiteSeries>, cfg: &RunConfig) -> Result<ProtocolOutcome> {
    let prep = Prepared::new(series, cfg)?;
    let mut models = BTreeMap::new();
    for &f in &cfg.families {
        log::info!("training {}", f.name());
        models.insert(f, train_family(&prep, f, cfg)?);
    }
    let refs: Vec<&TrainedModel> = models.values().collect();
    let (records, report) = evaluate_models(&prep, &refs, cfg.skill_window)?;
    Ok(ProtocolOutcome {
        models,
        records,
        report,
    })
}
