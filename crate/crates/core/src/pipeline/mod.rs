//! End-to-end protocol: data generation, search, training, evaluation and
//! reporting, both in memory and through an output directory.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod commands;
pub mod config;
pub mod protocol;
pub mod theta;

pub use commands::{
    cmd_evaluate, cmd_gen_data, cmd_hypersearch, cmd_report, cmd_train, load_dataset, with_threads, DataManifest,
};
pub use config::RunConfig;
pub use protocol::{evaluate_models, run_protocol, train_family, Prepared, ProtocolOutcome, TrainedModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Persistence,
    /// The raw NWP irradiance forecast.
    Nwp,
    Linear,
    Gbt,
    LocalDnn,
    GlobalDnn,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Persistence,
        Family::Nwp,
        Family::Linear,
        Family::Gbt,
        Family::LocalDnn,
        Family::GlobalDnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Persistence => "persistence",
            Family::Nwp => "nwp",
            Family::Linear => "linear",
            Family::Gbt => "gbt",
            Family::LocalDnn => "local-dnn",
            Family::GlobalDnn => "global-dnn",
        }
    }

    pub fn is_stateless(self) -> bool {
        matches!(self, Family::Persistence | Family::Nwp)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = Family::ALL.iter().map(|f| f.name()).collect();
                Error::Config(format!("unknown model family {s:?}; expected one of {}", known.join(", ")))
            })
    }
}

/// Parses a comma-separated family list.
pub fn parse_families(list: &str) -> Result<Vec<Family>> {
    let fams = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(Family::from_str)
        .collect::<Result<Vec<_>>>()?;
    if fams.is_empty() {
        return Err(Error::Config("empty model list".into()));
    }
    Ok(fams)
}
