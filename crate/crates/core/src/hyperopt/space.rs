//! Mixed, conditional hyperparameter spaces.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Real(f64),
    Text(String),
}

impl ParamValue {
    /// Integer view used by activation conditions (`true` is 1).
    pub fn as_i64(&self) -> Option<i64> {
        match *self {
            ParamValue::Bool(b) => Some(i64::from(b)),
            ParamValue::Int(i) => Some(i),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            ParamValue::Int(i) => Some(i as f64),
            ParamValue::Real(r) => Some(r),
            _ => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Bool(b) => write!(f, "{b}"),
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Real(r) => write!(f, "{r}"),
            ParamValue::Text(s) => write!(f, "{s}"),
        }
    }
}

/// A configuration: one value per active dimension.
pub type HyperPoint = BTreeMap<String, ParamValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DimKind {
    Int { lo: i64, hi: i64 },
    Real { lo: f64, hi: f64 },
    LogReal { lo: f64, hi: f64 },
    Categorical { choices: Vec<ParamValue> },
}

/// Active only when `parent`'s integer value is at least `min`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub parent: String,
    pub min: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub kind: DimKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_if: Option<Condition>,
}

impl Dimension {
    pub fn new(name: &str, kind: DimKind) -> Self {
        Self {
            name: name.to_string(),
            kind,
            active_if: None,
        }
    }

    pub fn when(mut self, parent: &str, min: i64) -> Self {
        self.active_if = Some(Condition {
            parent: parent.to_string(),
            min,
        });
        self
    }

    pub fn is_active(&self, partial: &HyperPoint) -> bool {
        match &self.active_if {
            None => true,
            Some(c) => partial
                .get(&c.parent)
                .and_then(ParamValue::as_i64)
                .is_some_and(|v| v >= c.min),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, DimKind::Int { .. } | DimKind::Categorical { .. })
    }

    pub fn contains(&self, v: &ParamValue) -> bool {
        match (&self.kind, v) {
            (DimKind::Int { lo, hi }, ParamValue::Int(i)) => lo <= i && i <= hi,
            (DimKind::Real { lo, hi } | DimKind::LogReal { lo, hi }, ParamValue::Real(r)) => lo <= r && r <= hi,
            (DimKind::Categorical { choices }, v) => choices.contains(v),
            _ => false,
        }
    }

    pub fn sample_uniform<R: Rng>(&self, rng: &mut R) -> ParamValue {
        match &self.kind {
            DimKind::Int { lo, hi } => ParamValue::Int(rng.random_range(*lo..=*hi)),
            DimKind::Real { lo, hi } => ParamValue::Real(if lo < hi { rng.random_range(*lo..=*hi) } else { *lo }),
            DimKind::LogReal { lo, hi } => {
                let (a, b) = (lo.ln(), hi.ln());
                let v = if a < b { rng.random_range(a..=b).exp() } else { *lo };
                ParamValue::Real(v.clamp(*lo, *hi))
            }
            DimKind::Categorical { choices } => choices[rng.random_range(0..choices.len())].clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dimensions: Vec<Dimension>,
}

impl SearchSpace {
    pub fn new(dimensions: Vec<Dimension>) -> Result<Self> {
        let s = Self { dimensions };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen: Vec<&str> = Vec::new();
        for d in &self.dimensions {
            let bad = |m: String| Err(Error::Parameter(format!("dimension {}: {m}", d.name)));
            match &d.kind {
                DimKind::Int { lo, hi } if lo > hi => return bad(format!("empty range {lo}..{hi}")),
                DimKind::Real { lo, hi } if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() => {
                    return bad(format!("invalid range {lo}..{hi}"))
                }
                DimKind::LogReal { lo, hi } if !(0.0 < *lo && lo <= hi && hi.is_finite()) => {
                    return bad(format!("log range must be positive, got {lo}..{hi}"))
                }
                DimKind::Categorical { choices } if choices.is_empty() => return bad("no choices".into()),
                _ => {}
            }
            if let Some(c) = &d.active_if {
                if !seen.contains(&c.parent.as_str()) {
                    return bad(format!("condition parent {} must be declared earlier", c.parent));
                }
            }
            if seen.contains(&d.name.as_str()) {
                return bad("declared twice".into());
            }
            seen.push(&d.name);
        }
        Ok(())
    }

    pub fn is_discrete(&self) -> bool {
        self.dimensions.iter().all(Dimension::is_discrete)
    }

    pub fn sample_uniform<R: Rng>(&self, rng: &mut R) -> HyperPoint {
        let mut p = HyperPoint::new();
        for d in &self.dimensions {
            if d.is_active(&p) {
                let v = d.sample_uniform(rng);
                p.insert(d.name.clone(), v);
            }
        }
        p
    }

    /// True when `p` holds exactly the active dimensions, each within bounds.
    pub fn contains(&self, p: &HyperPoint) -> bool {
        let mut n = 0;
        for d in &self.dimensions {
            match (d.is_active(p), p.get(&d.name)) {
                (true, Some(v)) if d.contains(v) => n += 1,
                (false, None) => {}
                _ => return false,
            }
        }
        n == p.len()
    }

    /// Layers, widths, learning rate, dropout and the feature-selection
    /// flags of the global model.
    pub fn global_default() -> Self {
        let mut dims = vec![
            Dimension::new("hidden_layers", DimKind::Int { lo: 1, hi: 4 }),
            Dimension::new("neurons_1", DimKind::Int { lo: 100, hi: 400 }),
            Dimension::new("neurons_2", DimKind::Int { lo: 50, hi: 150 }).when("hidden_layers", 2),
            Dimension::new("neurons_3", DimKind::Int { lo: 25, hi: 100 }).when("hidden_layers", 3),
            Dimension::new("neurons_4", DimKind::Int { lo: 10, hi: 50 }).when("hidden_layers", 4),
            Dimension::new("learning_rate", DimKind::LogReal { lo: 1e-4, hi: 1e-2 }),
            Dimension::new("dropout", DimKind::Real { lo: 0.0, hi: 0.9 }),
        ];
        dims.extend(feature_dimensions());
        Self { dimensions: dims }
    }

    /// Feature flags plus the ridge penalty.
    pub fn linear_default() -> Self {
        let mut dims = feature_dimensions();
        dims.push(Dimension::new("lambda", DimKind::LogReal { lo: 1e-3, hi: 1e2 }));
        Self { dimensions: dims }
    }

    /// Feature flags plus boosting parameters.
    pub fn gbt_default() -> Self {
        let mut dims = feature_dimensions();
        dims.extend([
            Dimension::new("n_trees", DimKind::Int { lo: 20, hi: 300 }),
            Dimension::new("max_depth", DimKind::Int { lo: 1, hi: 5 }),
            Dimension::new("shrinkage", DimKind::LogReal { lo: 0.01, hi: 0.5 }),
        ]);
        Self { dimensions: dims }
    }
}

fn flag(name: &str) -> Dimension {
    Dimension::new(
        name,
        DimKind::Categorical {
            choices: vec![ParamValue::Bool(false), ParamValue::Bool(true)],
        },
    )
}

fn feature_dimensions() -> Vec<Dimension> {
    vec![
        flag("use_nwp"),
        flag("use_clearsky"),
        flag("use_lags"),
        Dimension::new("lags_current", DimKind::Int { lo: 1, hi: 6 }).when("use_lags", 1),
        Dimension::new(
            "daily_lag",
            DimKind::Categorical {
                choices: vec![ParamValue::Int(0), ParamValue::Int(1)],
            },
        )
        .when("use_lags", 1),
        flag("use_temp_hist"),
        flag("use_humid_hist"),
        flag("use_temp_fc"),
        flag("use_humid_fc"),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn conditional_dimensions() {
        let s = SearchSpace::global_default();
        s.validate().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let p = s.sample_uniform(&mut rng);
            assert!(s.contains(&p));
            let layers = p["hidden_layers"].as_i64().unwrap();
            for k in 2..=4 {
                assert_eq!(p.contains_key(&format!("neurons_{k}")), layers >= k);
            }
        }
    }

    #[test]
    fn rejects_bad_ranges() {
        assert!(SearchSpace::new(vec![Dimension::new("x", DimKind::LogReal { lo: 0.0, hi: 1.0 })]).is_err());
        assert!(SearchSpace::new(vec![Dimension::new("x", DimKind::Int { lo: 2, hi: 1 })]).is_err());
        assert!(SearchSpace::new(vec![Dimension::new("x", DimKind::Int { lo: 0, hi: 1 }).when("y", 1)]).is_err());
    }

    #[test]
    fn value_json_keeps_type() {
        let p: HyperPoint = BTreeMap::from([
            ("a".to_string(), ParamValue::Int(3)),
            ("b".to_string(), ParamValue::Real(3.0)),
            ("c".to_string(), ParamValue::Bool(true)),
        ]);
        let back: HyperPoint = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
    }
}
