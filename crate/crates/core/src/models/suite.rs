//! Model collections: keyed local suites, per-site MLPs and the global MLP.

use std::collections::BTreeMap;

use chrono::Timelike;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::HORIZONS;
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, LagSource, Normalizer, Sample};
use crate::models::gbt::{fit_gbt, GbtModel, GbtParams};
use crate::models::linear::{fit_linear_arx, min_samples, LinearArxModel};
use crate::models::mlp::{mlp_train, MlpModel, TrainConfig, TrainData, TrainTrace};
use crate::synth::derive_seed;

/// Training and validation samples of one site.
#[derive(Debug, Clone)]
pub struct SiteSamples {
    pub site_id: String,
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LocalKey {
    pub site_id: String,
    /// UTC hour of day of the issue slot.
    pub hour: u32,
    /// 1-based horizon.
    pub horizon: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyedFamily {
    Linear,
    Gbt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KeyedModel {
    /// Ridge fit on standardized inputs.
    Linear {
        normalizer: Normalizer,
        model: LinearArxModel,
    },
    Gbt {
        model: GbtModel,
    },
}

impl KeyedModel {
    /// Forecast from a single-horizon input view.
    pub fn predict(&self, view: &[f64]) -> f64 {
        match self {
            KeyedModel::Linear { normalizer, model } => {
                let mut x = view.to_vec();
                normalizer.transform(&mut x);
                model.predict(&x)
            }
            KeyedModel::Gbt { model } => model.predict(view),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyedParams {
    /// Ridge penalty on standardized inputs.
    pub lambda: f64,
    pub gbt: GbtParams,
}

impl Default for KeyedParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            gbt: GbtParams::default(),
        }
    }
}

/// One model per (site, issue hour, horizon).
#[derive(Debug, Clone)]
pub struct KeyedSuite {
    pub family: KeyedFamily,
    pub features: FeatureConfig,
    pub models: BTreeMap<LocalKey, KeyedModel>,
    /// Keys seen in training data that could not be fitted, with the reason.
    pub untrained: Vec<(LocalKey, String)>,
}

impl KeyedSuite {
    /// Forecasts for the six horizons; `None` where the key has no model.
    pub fn predict(&self, sample: &Sample) -> [Option<f64>; HORIZONS] {
        let layout = self.features.layout();
        let hour = sample.issue_time.hour();
        std::array::from_fn(|i| {
            let key = LocalKey {
                site_id: sample.site_id.clone(),
                hour,
                horizon: i + 1,
            };
            self.models
                .get(&key)
                .map(|m| m.predict(&layout.horizon_view(&sample.x, i + 1)))
        })
    }
}

/// Per-site 6-output MLP trained on that site's ground-lag features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteMlp {
    pub site_id: String,
    pub features: FeatureConfig,
    pub normalizer: Normalizer,
    pub model: MlpModel,
    pub trace: TrainTrace,
}

impl SiteMlp {
    pub fn predict(&self, sample: &Sample) -> Result<Vec<f64>> {
        predict_normalized(&self.normalizer, &self.model, &sample.x)
    }
}

/// The single cross-site model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalMlp {
    pub features: FeatureConfig,
    pub normalizer: Normalizer,
    pub model: MlpModel,
    pub trace: TrainTrace,
    pub train_sites: Vec<String>,
}

impl GlobalMlp {
    pub fn predict(&self, sample: &Sample) -> Result<Vec<f64>> {
        predict_normalized(&self.normalizer, &self.model, &sample.x)
    }

    /// Re-checks that the network, normaliser and feature set agree.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        check_arch(&self.features, self.model.layer_sizes())?;
        if self.normalizer.dim() != self.features.input_dim() {
            return Err(Error::Contract("normaliser width does not match features".into()));
        }
        Ok(())
    }
}

fn predict_normalized(normalizer: &Normalizer, model: &MlpModel, x: &[f64]) -> Result<Vec<f64>> {
    let mut x = x.to_vec();
    if x.len() != normalizer.dim() {
        return Err(Error::Contract(format!(
            "sample has {} features, model expects {}",
            x.len(),
            normalizer.dim()
        )));
    }
    normalizer.transform(&mut x);
    model.forward(&x)
}

/// `[input_dim, hidden.., 6]` for the given feature set.
pub fn architecture(features: &FeatureConfig, hidden: &[usize]) -> Vec<usize> {
    let mut arch = vec![features.input_dim()];
    arch.extend_from_slice(hidden);
    arch.push(HORIZONS);
    arch
}

fn check_arch(features: &FeatureConfig, arch: &[usize]) -> Result<()> {
    let dim = features.input_dim();
    if arch.first() != Some(&dim) || arch.last() != Some(&HORIZONS) {
        return Err(Error::Contract(format!(
            "architecture {arch:?} does not fit {dim} inputs and {HORIZONS} outputs"
        )));
    }
    Ok(())
}

fn normalized_data(samples: &[Sample], normalizer: &Normalizer) -> TrainData {
    let mut data = TrainData::from_samples(samples);
    for mut row in data.x.rows_mut() {
        normalizer.transform(row.as_slice_mut().expect("standard layout"));
    }
    data
}

fn fit_mlp(
    train: &[Sample],
    validation: &[Sample],
    features: &FeatureConfig,
    hidden: &[usize],
    cfg: &TrainConfig,
) -> Result<(Normalizer, MlpModel, TrainTrace)> {
    let arch = architecture(features, hidden);
    check_arch(features, &arch)?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::Parameter("training and validation samples must be non-empty".into()));
    }
    let normalizer = Normalizer::fit_samples(train)?;
    let tr = normalized_data(train, &normalizer);
    let va = normalized_data(validation, &normalizer);
    let (model, trace) = mlp_train(&tr, &va, &arch, cfg)?;
    Ok((normalizer, model, trace))
}

/// Pools every training site's samples into one training and one
/// validation set and fits a single MLP.
pub fn train_global(
    sites: &[SiteSamples],
    features: &FeatureConfig,
    hidden: &[usize],
    cfg: &TrainConfig,
) -> Result<GlobalMlp> {
    if sites.is_empty() {
        return Err(Error::Parameter("global training needs at least one site".into()));
    }
    if features.use_lags && features.lag_source != LagSource::Satellite {
        return Err(Error::Parameter("the global model must lag the satellite channel".into()));
    }
    let train: Vec<Sample> = sites.iter().flat_map(|s| s.train.iter().cloned()).collect();
    let validation: Vec<Sample> = sites.iter().flat_map(|s| s.validation.iter().cloned()).collect();
    log::info!(
        "global model: {} sites, {} training and {} validation samples",
        sites.len(),
        train.len(),
        validation.len()
    );
    let (normalizer, model, trace) = fit_mlp(&train, &validation, features, hidden, cfg)?;
    Ok(GlobalMlp {
        features: *features,
        normalizer,
        model,
        trace,
        train_sites: sites.iter().map(|s| s.site_id.clone()).collect(),
    })
}

/// One MLP per site, each with its own seed derived from the site id.
pub fn train_local_mlps(
    sites: &[SiteSamples],
    features: &FeatureConfig,
    hidden: &[usize],
    cfg: &TrainConfig,
) -> Result<Vec<SiteMlp>> {
    sites
        .iter()
        .map(|s| {
            let cfg = TrainConfig {
                seed: derive_seed(cfg.seed, &format!("local-dnn/{}", s.site_id)),
                ..cfg.clone()
            };
            let (normalizer, model, trace) = fit_mlp(&s.train, &s.validation, features, hidden, &cfg)
                .map_err(|e| match e {
                    Error::Training(m) => Error::Training(format!("site {}: {m}", s.site_id)),
                    other => other,
                })?;
            Ok(SiteMlp {
                site_id: s.site_id.clone(),
                features: *features,
                normalizer,
                model,
                trace,
            })
        })
        .collect()
}

/// Fits one linear or boosted-tree model per (site, issue hour, horizon)
/// from each site's training samples whose target slot is retained.
pub fn train_keyed_suite(
    sites: &[SiteSamples],
    family: KeyedFamily,
    features: &FeatureConfig,
    params: &KeyedParams,
) -> Result<KeyedSuite> {
    features.validate()?;
    params.gbt.validate()?;
    let layout = features.layout();
    let mut groups: BTreeMap<LocalKey, (Vec<Vec<f64>>, Vec<f64>)> = BTreeMap::new();
    for site in sites {
        for s in &site.train {
            for p in (1..=HORIZONS).filter(|&p| s.target_retained[p - 1]) {
                let key = LocalKey {
                    site_id: site.site_id.clone(),
                    hour: s.issue_time.hour(),
                    horizon: p,
                };
                let g = groups.entry(key).or_default();
                g.0.push(layout.horizon_view(&s.x, p));
                g.1.push(s.y[p - 1]);
            }
        }
    }
    let fitted: Vec<(LocalKey, Result<KeyedModel>)> = groups
        .into_par_iter()
        .map(|(key, (rows, y))| {
            let model = match family {
                KeyedFamily::Linear => fit_standardized_linear(&rows, &y, params.lambda),
                KeyedFamily::Gbt => fit_gbt(&rows, &y, &params.gbt).map(|model| KeyedModel::Gbt { model }),
            };
            (key, model)
        })
        .collect();
    let mut models = BTreeMap::new();
    let mut untrained = Vec::new();
    for (key, r) in fitted {
        match r {
            Ok(m) => {
                models.insert(key, m);
            }
            Err(e @ (Error::Parameter(_) | Error::Singular(_))) => {
                log::warn!(
                    "{family:?} model for {} hour {} horizon {} left untrained: {e}",
                    key.site_id,
                    key.hour,
                    key.horizon
                );
                untrained.push((key, e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(KeyedSuite {
        family,
        features: *features,
        models,
        untrained,
    })
}

fn fit_standardized_linear(rows: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<KeyedModel> {
    let dim = rows.first().map_or(0, Vec::len);
    if rows.len() < min_samples(dim) {
        return Err(Error::Parameter(format!(
            "{} samples, need {}",
            rows.len(),
            min_samples(dim)
        )));
    }
    let normalizer = Normalizer::fit(rows.iter().map(Vec::as_slice))?;
    let scaled: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let mut r = r.clone();
            normalizer.transform(&mut r);
            r
        })
        .collect();
    let model = fit_linear_arx(&scaled, y, lambda)?;
    Ok(KeyedModel::Linear { normalizer, model })
}
