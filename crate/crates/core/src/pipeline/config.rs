//! Run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::SplitBoundaries;
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::hyperopt::SearchSpace;
use crate::models::gbt::GbtParams;
use crate::models::mlp::TrainConfig;
use crate::synth::SynthConfig;

use super::Family;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NeuralSettings {
    pub hidden: Vec<usize>,
    pub features: FeatureConfig,
    /// `seed` is replaced by a value derived from the run seed.
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearSettings {
    pub features: FeatureConfig,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbtSettings {
    pub features: FeatureConfig,
    pub params: GbtParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSettings {
    pub trials: usize,
    /// Epoch cap for each trial's training run.
    pub max_epochs: usize,
    pub n_starts: usize,
    /// Replaces the family's default space when set.
    pub space: Option<SearchSpace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Directory with `observations.csv` and `nwp.csv`; the synthetic
    /// dataset under `out` is used when unset.
    pub data_dir: Option<PathBuf>,
    pub families: Vec<Family>,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
    pub min_elevation_deg: f64,
    /// UTC hours at which forecasts are issued.
    pub issue_hours: Vec<u32>,
    pub skill_window: usize,
    /// Sites used to train the global model; the first five when empty.
    pub train_sites: Vec<String>,
    pub split: SplitBoundaries,
    pub synth: SynthConfig,
    pub global_dnn: NeuralSettings,
    pub local_dnn: NeuralSettings,
    pub linear: LinearSettings,
    pub gbt: GbtSettings,
    pub search: SearchSettings,
}

impl Default for NeuralSettings {
    fn default() -> Self {
        Self {
            hidden: vec![208, 63],
            features: FeatureConfig::global_default(),
            train: TrainConfig::default(),
        }
    }
}

impl NeuralSettings {
    fn local() -> Self {
        Self {
            features: FeatureConfig::local_default(),
            ..Self::default()
        }
    }
}

impl Default for LinearSettings {
    fn default() -> Self {
        Self {
            features: FeatureConfig::local_default(),
            lambda: 1.0,
        }
    }
}

impl Default for GbtSettings {
    fn default() -> Self {
        Self {
            features: FeatureConfig::local_default(),
            params: GbtParams::default(),
        }
    }
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            trials: 50,
            max_epochs: 150,
            n_starts: 1,
            space: None,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 2018,
            out: PathBuf::from("run"),
            data_dir: None,
            families: Family::ALL.to_vec(),
            threads: 0,
            min_elevation_deg: 3.0,
            issue_hours: (7..=12).collect(),
            skill_window: crate::metrics::SKILL_WINDOW,
            train_sites: Vec::new(),
            split: SplitBoundaries::default(),
            synth: SynthConfig::default(),
            global_dnn: NeuralSettings::default(),
            local_dnn: NeuralSettings::local(),
            linear: LinearSettings::default(),
            gbt: GbtSettings::default(),
            search: SearchSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Checks every section; all problems surface as configuration errors.
    pub fn validate(&self) -> Result<()> {
        let wrap = |r: Result<()>, what: &str| {
            r.map_err(|e| Error::Config(format!("{what}: {e}")))
        };
        wrap(self.synth.validate(), "synth")?;
        wrap(self.split.validate(), "split")?;
        for (name, s) in [("global_dnn", &self.global_dnn), ("local_dnn", &self.local_dnn)] {
            wrap(s.features.validate(), name)?;
            wrap(s.train.validate(), name)?;
            if s.hidden.is_empty() || s.hidden.contains(&0) {
                return Err(Error::Config(format!("{name}: hidden layer sizes must be positive")));
            }
        }
        wrap(self.linear.features.validate(), "linear")?;
        wrap(self.gbt.features.validate(), "gbt")?;
        wrap(self.gbt.params.validate(), "gbt")?;
        if !(self.linear.lambda >= 0.0) {
            return Err(Error::Config("linear: lambda must be >= 0".into()));
        }
        if self.issue_hours.is_empty() || self.issue_hours.iter().any(|&h| h > 23) {
            return Err(Error::Config("issue_hours must list hours in 0..=23".into()));
        }
        if self.skill_window < 2 {
            return Err(Error::Config("skill_window must be >= 2".into()));
        }
        if self.search.trials == 0 || self.search.max_epochs < 2 || self.search.n_starts == 0 {
            return Err(Error::Config("search: trials, max_epochs and n_starts must be positive".into()));
        }
        if let Some(space) = &self.search.space {
            wrap(space.validate(), "search.space")?;
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(json))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::from_toml("sed = 1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("[synth]\nn_site = 3"), Err(Error::Config(_))));
    }

    #[test]
    fn nested_override() {
        let c = RunConfig::from_toml(
            "seed = 7\nfamilies = [\"persistence\", \"global-dnn\"]\n[synth]\nn_sites = 4\n[global_dnn.train]\nmax_epochs = 30\n",
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.synth.n_sites, 4);
        assert_eq!(c.global_dnn.train.max_epochs, 30);
        assert_eq!(c.global_dnn.hidden, vec![208, 63]);
        assert_eq!(c.families, vec![Family::Persistence, Family::GlobalDnn]);
    }

    #[test]
    fn invalid_section_is_config_error() {
        let e = RunConfig::from_toml("[global_dnn.train]\npatience = 900\n").unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }
}
