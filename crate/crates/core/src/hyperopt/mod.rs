//! Sequential model-based optimization with a TPE surrogate.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::StreamFactory;

pub mod space;
pub mod tpe;

pub use space::{Condition, DimKind, Dimension, HyperPoint, ParamValue, SearchSpace};
pub use tpe::{tpe_suggest, TpeConfig};

/// Performance recorded for a trial whose objective failed.
pub const FAILED_PERFORMANCE: f64 = f64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub point: HyperPoint,
    pub performance: f64,
    pub wall_time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Append-only list of evaluated trials.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialHistory {
    pub trials: Vec<Trial>,
}

impl TrialHistory {
    /// Lowest performance; ties go to the earliest trial.
    pub fn best(&self) -> Option<&Trial> {
        self.trials
            .iter()
            .min_by(|a, b| a.performance.total_cmp(&b.performance).then(a.index.cmp(&b.index)))
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
pub struct SmboOptions {
    pub tpe: TpeConfig,
    /// Evaluated as the first trial instead of a random draw.
    pub initial: Option<HyperPoint>,
}

/// Proposal for trial `index`; each index has its own RNG stream so a
/// resumed run proposes what an uninterrupted run would have.
fn propose(history: &TrialHistory, space: &SearchSpace, seed: u64, opts: &SmboOptions) -> HyperPoint {
    let index = history.len();
    if index == 0 {
        if let Some(p) = &opts.initial {
            return p.clone();
        }
    }
    let mut rng = StreamFactory::new(seed, "tpe").at(index as u64, 0);
    tpe_suggest(&history.trials, space, &opts.tpe, &mut rng)
}

fn evaluate<F>(objective: &mut F, point: HyperPoint, index: usize) -> Trial
where
    F: FnMut(&HyperPoint) -> Result<f64>,
{
    let started = Instant::now();
    let outcome = objective(&point);
    let wall_time_s = started.elapsed().as_secs_f64();
    let (performance, error) = match outcome {
        Ok(v) if v.is_finite() => (v, None),
        Ok(v) => (FAILED_PERFORMANCE, Some(format!("objective returned {v}"))),
        Err(e) => (FAILED_PERFORMANCE, Some(e.to_string())),
    };
    if let Some(e) = &error {
        log::warn!("trial {index} failed: {e}");
    }
    Trial {
        index,
        point,
        performance,
        wall_time_s,
        error,
    }
}

/// Runs trials until `history` holds `budget` of them, calling `on_trial`
/// after each new one. Returns the best trial.
pub fn smbo_continue<F>(
    mut objective: F,
    space: &SearchSpace,
    budget: usize,
    seed: u64,
    opts: &SmboOptions,
    history: &mut TrialHistory,
    mut on_trial: impl FnMut(&Trial) -> Result<()>,
) -> Result<Trial>
where
    F: FnMut(&HyperPoint) -> Result<f64>,
{
    if budget == 0 {
        return Err(Error::Parameter("trial budget must be >= 1".into()));
    }
    space.validate()?;
    if let Some(p) = &opts.initial {
        if !space.contains(p) {
            return Err(Error::Parameter("initial point lies outside the search space".into()));
        }
    }
    while history.len() < budget {
        let point = propose(history, space, seed, opts);
        let trial = evaluate(&mut objective, point, history.len());
        log::info!(
            "trial {}/{budget}: performance {} ({:.1} s)",
            trial.index + 1,
            trial.performance,
            trial.wall_time_s
        );
        on_trial(&trial)?;
        history.trials.push(trial);
    }
    Ok(history.best().expect("budget >= 1").clone())
}

pub fn smbo_optimize<F>(
    objective: F,
    space: &SearchSpace,
    budget: usize,
    seed: u64,
    opts: &SmboOptions,
) -> Result<(Trial, TrialHistory)>
where
    F: FnMut(&HyperPoint) -> Result<f64>,
{
    let mut history = TrialHistory::default();
    let best = smbo_continue(objective, space, budget, seed, opts, &mut history, |_| Ok(()))?;
    Ok((best, history))
}

/// JSON-lines trial log, one trial per line, flushed after every append.
pub struct TrialLog {
    path: PathBuf,
    file: File,
}

impl TrialLog {
    /// Opens `path` for appending and returns the trials already in it.
    ///
    /// A log that does not parse, or whose indices are not `0, 1, ..`, is
    /// refused unless `restart` is set, in which case it is truncated.
    pub fn open(path: &Path, restart: bool) -> Result<(Self, TrialHistory)> {
        let history = if restart || !path.exists() {
            File::create(path).map_err(|e| Error::io(path, e))?;
            TrialHistory::default()
        } else {
            Self::read(path)?
        };
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok((
            Self {
                path: path.to_path_buf(),
                file,
            },
            history,
        ))
    }

    pub fn read(path: &Path) -> Result<TrialHistory> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut trials = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let corrupt = |why: String| {
                Error::Integrity(format!(
                    "trial log {} is corrupt at line {}: {why}; pass the restart flag to discard it",
                    path.display(),
                    i + 1
                ))
            };
            let t: Trial = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
            if t.index != trials.len() {
                return Err(corrupt(format!("expected trial {}, found {}", trials.len(), t.index)));
            }
            trials.push(t);
        }
        Ok(TrialHistory { trials })
    }

    pub fn append(&mut self, t: &Trial) -> Result<()> {
        let line = serde_json::to_string(t).map_err(|e| Error::Json {
            path: self.path.clone(),
            source: e,
        })?;
        writeln!(self.file, "{line}").map_err(|e| Error::io(&self.path, e))?;
        self.file.flush().map_err(|e| Error::io(&self.path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn real_space() -> SearchSpace {
        SearchSpace::new(vec![Dimension::new("theta", DimKind::Real { lo: 0.0, hi: 10.0 })]).unwrap()
    }

    fn theta(p: &HyperPoint) -> f64 {
        p["theta"].as_f64().unwrap()
    }

    #[test]
    fn single_trial() {
        let (best, h) = smbo_optimize(|p| Ok(theta(p)), &real_space(), 1, 5, &SmboOptions::default()).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(best, h.trials[0]);
    }

    #[test]
    fn failures_record_worst() {
        let mut calls = 0;
        let (best, h) = smbo_optimize(
            |p| {
                calls += 1;
                if calls == 2 {
                    Err(Error::Training("boom".into()))
                } else {
                    Ok(theta(p))
                }
            },
            &real_space(),
            4,
            1,
            &SmboOptions::default(),
        )
        .unwrap();
        assert_eq!(h.trials[1].performance, FAILED_PERFORMANCE);
        assert!(h.trials[1].error.is_some());
        assert_ne!(best.index, 1);
    }

    #[test]
    fn single_choice_dimension() {
        let space = SearchSpace::new(vec![Dimension::new(
            "c",
            DimKind::Categorical {
                choices: vec![ParamValue::Text("only".into())],
            },
        )])
        .unwrap();
        let trials: Vec<Trial> = (0..5)
            .map(|i| Trial {
                index: i,
                point: HyperPoint::from([("c".to_string(), ParamValue::Text("only".into()))]),
                performance: i as f64,
                wall_time_s: 0.0,
                error: None,
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = tpe_suggest(&trials, &space, &TpeConfig::default(), &mut rng);
        assert_eq!(p["c"], ParamValue::Text("only".into()));
    }

    #[test]
    fn log_resume_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trials.jsonl");
        let space = real_space();
        let opts = SmboOptions::default();
        let (mut log, mut h) = TrialLog::open(&path, false).unwrap();
        smbo_continue(|p| Ok(theta(p)), &space, 3, 9, &opts, &mut h, |t| log.append(t)).unwrap();
        drop(log);

        let (mut log, mut h2) = TrialLog::open(&path, false).unwrap();
        assert_eq!(h2, h);
        let mut extra = 0;
        smbo_continue(|p| { extra += 1; Ok(theta(p)) }, &space, 5, 9, &opts, &mut h2, |t| log.append(t)).unwrap();
        assert_eq!(extra, 2);
        drop(log);

        let (_, straight) = smbo_optimize(|p| Ok(theta(p)), &space, 5, 9, &opts).unwrap();
        let points = |h: &TrialHistory| h.trials.iter().map(|t| t.point.clone()).collect::<Vec<_>>();
        assert_eq!(points(&h2), points(&straight));

        std::fs::OpenOptions::new().append(true).open(&path).unwrap().write_all(b"{\"index\":5,").unwrap();
        assert!(matches!(TrialLog::open(&path, false), Err(Error::Integrity(_))));
        let (_, h3) = TrialLog::open(&path, true).unwrap();
        assert!(h3.is_empty());
    }
}
