//! Conversions between hyperparameter points and model settings.

use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::hyperopt::{HyperPoint, ParamValue};
use crate::models::gbt::GbtParams;

use super::config::{GbtSettings, LinearSettings, NeuralSettings};

fn get<'a>(p: &'a HyperPoint, key: &str) -> Result<&'a ParamValue> {
    p.get(key).ok_or_else(|| Error::Parameter(format!("hyperparameter {key} is missing")))
}

fn int(p: &HyperPoint, key: &str) -> Result<i64> {
    get(p, key)?
        .as_i64()
        .ok_or_else(|| Error::Parameter(format!("hyperparameter {key} is not an integer")))
}

fn real(p: &HyperPoint, key: &str) -> Result<f64> {
    get(p, key)?
        .as_f64()
        .ok_or_else(|| Error::Parameter(format!("hyperparameter {key} is not numeric")))
}

fn flag(p: &HyperPoint, key: &str) -> Result<bool> {
    Ok(int(p, key)? != 0)
}

fn usize_of(v: i64, key: &str) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::Parameter(format!("hyperparameter {key} is negative")))
}

/// Feature flags of a point; unset lag options fall back to `base`.
pub fn features_from_point(p: &HyperPoint, base: &FeatureConfig) -> Result<FeatureConfig> {
    let use_lags = flag(p, "use_lags")?;
    let cfg = FeatureConfig {
        use_nwp: flag(p, "use_nwp")?,
        use_clearsky: flag(p, "use_clearsky")?,
        use_lags,
        use_temp_hist: flag(p, "use_temp_hist")?,
        use_humid_hist: flag(p, "use_humid_hist")?,
        use_temp_fc: flag(p, "use_temp_fc")?,
        use_humid_fc: flag(p, "use_humid_fc")?,
        lags_current: if use_lags {
            usize_of(int(p, "lags_current")?, "lags_current")?
        } else {
            base.lags_current
        },
        daily_lag: if use_lags { flag(p, "daily_lag")? } else { base.daily_lag },
        lag_source: base.lag_source,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn features_to_point(f: &FeatureConfig) -> HyperPoint {
    let mut p = HyperPoint::new();
    let mut put = |k: &str, v: ParamValue| {
        p.insert(k.to_string(), v);
    };
    put("use_nwp", ParamValue::Bool(f.use_nwp));
    put("use_clearsky", ParamValue::Bool(f.use_clearsky));
    put("use_lags", ParamValue::Bool(f.use_lags));
    if f.use_lags {
        put("lags_current", ParamValue::Int(f.lags_current as i64));
        put("daily_lag", ParamValue::Int(i64::from(f.daily_lag)));
    }
    put("use_temp_hist", ParamValue::Bool(f.use_temp_hist));
    put("use_humid_hist", ParamValue::Bool(f.use_humid_hist));
    put("use_temp_fc", ParamValue::Bool(f.use_temp_fc));
    put("use_humid_fc", ParamValue::Bool(f.use_humid_fc));
    p
}

pub fn neural_from_point(p: &HyperPoint, base: &NeuralSettings) -> Result<NeuralSettings> {
    let layers = int(p, "hidden_layers")?;
    let hidden = (1..=layers)
        .map(|k| {
            let key = format!("neurons_{k}");
            usize_of(int(p, &key)?, &key)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut s = base.clone();
    s.hidden = hidden;
    s.train.learning_rate = real(p, "learning_rate")?;
    s.train.dropout = real(p, "dropout")?;
    s.features = features_from_point(p, &base.features)?;
    s.train.validate()?;
    Ok(s)
}

pub fn neural_to_point(s: &NeuralSettings) -> HyperPoint {
    let mut p = features_to_point(&s.features);
    p.insert("hidden_layers".into(), ParamValue::Int(s.hidden.len() as i64));
    for (k, n) in s.hidden.iter().enumerate() {
        p.insert(format!("neurons_{}", k + 1), ParamValue::Int(*n as i64));
    }
    p.insert("learning_rate".into(), ParamValue::Real(s.train.learning_rate));
    p.insert("dropout".into(), ParamValue::Real(s.train.dropout));
    p
}

pub fn linear_from_point(p: &HyperPoint, base: &LinearSettings) -> Result<LinearSettings> {
    Ok(LinearSettings {
        features: features_from_point(p, &base.features)?,
        lambda: real(p, "lambda")?,
    })
}

pub fn gbt_from_point(p: &HyperPoint, base: &GbtSettings) -> Result<GbtSettings> {
    let params = GbtParams {
        n_trees: usize_of(int(p, "n_trees")?, "n_trees")?,
        max_depth: usize_of(int(p, "max_depth")?, "max_depth")?,
        shrinkage: real(p, "shrinkage")?,
        min_leaf: base.params.min_leaf,
    };
    params.validate()?;
    Ok(GbtSettings {
        features: features_from_point(p, &base.features)?,
        params,
    })
}

/// The selected global configuration: two hidden layers of 208 and 63
/// units, learning rate 1.16e-3, dropout 0.14 and the 22 default inputs.
pub fn table1_global() -> NeuralSettings {
    NeuralSettings::default()
}
