//! Subcommands operating on an output directory.
//!
//! ```text
//! <out>/data/{observations.csv, nwp.csv, manifest.json}
//! <out>/search/<family>/{trials.jsonl, best.json}
//! <out>/models/<family>/...
//! <out>/report/{records.csv, cells.csv, histogram.csv, summary.json, tables.txt}
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{load_sites, write_nwp, write_observations, SitePartition, SiteSeries};
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::hyperopt::{smbo_continue, HyperPoint, SearchSpace, SmboOptions, Trial, TrialLog};
use crate::metrics::report::{read_records, render_tables, write_cells, write_histograms, write_records};
use crate::metrics::{aggregate_report, EvalReport};
use crate::models::suite::{GlobalMlp, KeyedFamily, KeyedModel, KeyedSuite, LocalKey, SiteMlp};
use crate::synth::{gen_dataset, STREAM_LABELS};

use super::config::{hex, RunConfig};
use super::protocol::{evaluate_models, partition_hash, train_family, validation_rrmse, Prepared, TrainedModel};
use super::theta::{gbt_from_point, linear_from_point, neural_from_point};
use super::Family;

pub const OBSERVATIONS_FILE: &str = "observations.csv";
pub const NWP_FILE: &str = "nwp.csv";

/// Runs `f` on a pool of `threads` workers (0 = runtime default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn mkdir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn create(p: &Path) -> Result<BufWriter<File>> {
    File::create(p).map(BufWriter::new).map_err(|e| Error::io(p, e))
}

fn write_json<T: Serialize>(p: &Path, value: &T, pretty: bool) -> Result<()> {
    let mut w = create(p)?;
    let json_err = |e| Error::Json {
        path: p.to_path_buf(),
        source: e,
    };
    if pretty {
        serde_json::to_writer_pretty(&mut w, value).map_err(json_err)?;
    } else {
        serde_json::to_writer(&mut w, value).map_err(json_err)?;
    }
    writeln!(w).and_then(|_| w.flush()).map_err(|e| Error::io(p, e))
}

fn read_json<T: DeserializeOwned>(p: &Path) -> Result<T> {
    let f = File::open(p).map_err(|e| Error::io(p, e))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| Error::Json {
        path: p.to_path_buf(),
        source: e,
    })
}

fn sha256_file(p: &Path) -> Result<String> {
    let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
    Ok(hex(&Sha256::digest(bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataManifest {
    pub seed: u64,
    pub config_hash: String,
    pub stream_labels: Vec<String>,
    pub n_sites: usize,
    pub n_slots: usize,
    /// File name to SHA-256.
    pub files: BTreeMap<String, String>,
}

pub fn data_dir(cfg: &RunConfig) -> PathBuf {
    cfg.data_dir.clone().unwrap_or_else(|| cfg.out.join("data"))
}

/// Generates the synthetic dataset under `<out>/data`. The run seed
/// replaces the synthetic config's seed.
pub fn cmd_gen_data(cfg: &RunConfig) -> Result<DataManifest> {
    let mut synth = cfg.synth.clone();
    synth.seed = cfg.seed;
    let series = gen_dataset(&synth)?;
    let dir = cfg.out.join("data");
    mkdir(&dir)?;
    let obs = dir.join(OBSERVATIONS_FILE);
    let nwp = dir.join(NWP_FILE);
    let mut w = create(&obs)?;
    write_observations(&series, &mut w)?;
    w.flush().map_err(|e| Error::io(&obs, e))?;
    let mut w = create(&nwp)?;
    write_nwp(&series, &mut w)?;
    w.flush().map_err(|e| Error::io(&nwp, e))?;
    let synth_json = serde_json::to_vec(&synth).expect("config serializes");
    let manifest = DataManifest {
        seed: synth.seed,
        config_hash: hex(&Sha256::digest(synth_json)),
        stream_labels: STREAM_LABELS.iter().map(|s| s.to_string()).collect(),
        n_sites: series.len(),
        n_slots: synth.n_slots(),
        files: BTreeMap::from([
            (OBSERVATIONS_FILE.to_string(), sha256_file(&obs)?),
            (NWP_FILE.to_string(), sha256_file(&nwp)?),
        ]),
    };
    write_json(&dir.join("manifest.json"), &manifest, true)?;
    log::info!("wrote {} sites x {} slots to {}", series.len(), synth.n_slots(), dir.display());
    Ok(manifest)
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Vec<SiteSeries>> {
    let dir = data_dir(cfg);
    let obs = dir.join(OBSERVATIONS_FILE);
    if !obs.exists() {
        return Err(Error::Lookup(format!(
            "no dataset at {}; run gen-data first or set data_dir",
            obs.display()
        )));
    }
    let nwp = dir.join(NWP_FILE);
    let mut paths = vec![obs];
    if nwp.exists() {
        paths.push(nwp);
    }
    load_sites(&paths)
}

fn search_dir(cfg: &RunConfig, family: Family) -> PathBuf {
    cfg.out.join("search").join(family.name())
}

fn default_space(cfg: &RunConfig, family: Family) -> Result<SearchSpace> {
    if let Some(s) = &cfg.search.space {
        return Ok(s.clone());
    }
    match family {
        Family::GlobalDnn | Family::LocalDnn => Ok(SearchSpace::global_default()),
        Family::Linear => Ok(SearchSpace::linear_default()),
        Family::Gbt => Ok(SearchSpace::gbt_default()),
        Family::Persistence | Family::Nwp => Err(Error::Config(format!("{family} has no hyperparameters"))),
    }
}

/// Copy of `cfg` with `point` applied to `family`'s settings.
pub fn apply_point(cfg: &RunConfig, family: Family, point: &HyperPoint) -> Result<RunConfig> {
    let mut c = cfg.clone();
    match family {
        Family::GlobalDnn => c.global_dnn = neural_from_point(point, &cfg.global_dnn)?,
        Family::LocalDnn => c.local_dnn = neural_from_point(point, &cfg.local_dnn)?,
        Family::Linear => c.linear = linear_from_point(point, &cfg.linear)?,
        Family::Gbt => c.gbt = gbt_from_point(point, &cfg.gbt)?,
        Family::Persistence | Family::Nwp => {}
    }
    Ok(c)
}

/// Validation rRMSE of `family` trained with `point` under the search budget.
pub fn search_objective(prep: &Prepared, cfg: &RunConfig, family: Family, point: &HyperPoint) -> Result<f64> {
    let mut c = apply_point(cfg, family, point)?;
    for s in [&mut c.global_dnn, &mut c.local_dnn] {
        s.train.max_epochs = cfg.search.max_epochs;
        s.train.patience = s.train.patience.min(cfg.search.max_epochs - 1);
        s.train.n_starts = cfg.search.n_starts;
    }
    let model = train_family(prep, family, &c)?;
    let sites = match family {
        Family::GlobalDnn => &prep.partition.train_sites,
        _ => &prep.partition.eval_sites,
    };
    validation_rrmse(prep, &model, sites)
}

/// Runs (or resumes) the search for `family` and stores the best point.
pub fn cmd_hypersearch(cfg: &RunConfig, family: Family, restart: bool) -> Result<Trial> {
    let space = default_space(cfg, family)?;
    let prep = Prepared::new(load_dataset(cfg)?, cfg)?;
    let dir = search_dir(cfg, family);
    mkdir(&dir)?;
    let (mut log, mut history) = TrialLog::open(&dir.join("trials.jsonl"), restart)?;
    if !history.is_empty() {
        log::info!("resuming {family} search after {} trials", history.len());
    }
    let seed = crate::synth::derive_seed(cfg.seed, &format!("search/{family}"));
    let best = smbo_continue(
        |p| search_objective(&prep, cfg, family, p),
        &space,
        cfg.search.trials,
        seed,
        &SmboOptions::default(),
        &mut history,
        |t| log.append(t),
    )?;
    write_json(&dir.join("best.json"), &best, true)?;
    Ok(best)
}

/// `cfg` with any stored search winner applied to `family`.
pub fn resolved_config(cfg: &RunConfig, family: Family) -> Result<RunConfig> {
    let best = search_dir(cfg, family).join("best.json");
    if family.is_stateless() || !best.exists() {
        return Ok(cfg.clone());
    }
    let trial: Trial = read_json(&best)?;
    log::info!("{family}: using searched hyperparameters from trial {}", trial.index);
    apply_point(cfg, family, &trial.point)
}

fn models_dir(cfg: &RunConfig, family: Family) -> PathBuf {
    cfg.out.join("models").join(family.name())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StatelessMarker {
    family: Family,
    stateless: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct KeyedArtifact {
    key: LocalKey,
    features: FeatureConfig,
    model: KeyedModel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SuiteManifest {
    family: KeyedFamily,
    features: FeatureConfig,
    n_models: usize,
    untrained: Vec<(LocalKey, String)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GlobalArtifact {
    #[serde(flatten)]
    model: GlobalMlp,
    partition: SitePartition,
    partition_hash: String,
}

fn keyed_file(key: &LocalKey) -> String {
    format!("{}_h{:02}_p{}.json", key.site_id, key.hour, key.horizon)
}

/// Trains `family` and writes its artifacts; returns the artifact count.
pub fn cmd_train(cfg: &RunConfig, family: Family) -> Result<usize> {
    let cfg = resolved_config(cfg, family)?;
    let prep = Prepared::new(load_dataset(&cfg)?, &cfg)?;
    let model = train_family(&prep, family, &cfg)?;
    save_model(&cfg, &prep, &model)
}

pub fn save_model(cfg: &RunConfig, prep: &Prepared, model: &TrainedModel) -> Result<usize> {
    let family = model.family();
    let dir = models_dir(cfg, family);
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    mkdir(&dir)?;
    match model {
        TrainedModel::Persistence | TrainedModel::Nwp => {
            write_json(&dir.join("MARKER.json"), &StatelessMarker { family, stateless: true }, true)?;
            Ok(0)
        }
        TrainedModel::Keyed(suite) => {
            for (key, m) in &suite.models {
                let a = KeyedArtifact {
                    key: key.clone(),
                    features: suite.features,
                    model: m.clone(),
                };
                write_json(&dir.join(keyed_file(key)), &a, false)?;
            }
            let manifest = SuiteManifest {
                family: suite.family,
                features: suite.features,
                n_models: suite.models.len(),
                untrained: suite.untrained.clone(),
            };
            write_json(&dir.join("suite.json"), &manifest, true)?;
            Ok(suite.models.len())
        }
        TrainedModel::LocalDnn(models) => {
            for m in models {
                write_json(&dir.join(format!("{}.json", m.site_id)), m, false)?;
            }
            Ok(models.len())
        }
        TrainedModel::GlobalDnn(g) => {
            let a = GlobalArtifact {
                model: g.clone(),
                partition: prep.partition.clone(),
                partition_hash: prep.partition_hash(),
            };
            write_json(&dir.join("model.json"), &a, false)?;
            Ok(1)
        }
    }
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    out.sort();
    Ok(out)
}

pub fn load_model(cfg: &RunConfig, family: Family) -> Result<TrainedModel> {
    let dir = models_dir(cfg, family);
    let missing = || Error::Lookup(format!("no trained artifact for {family} under {}", dir.display()));
    if !dir.is_dir() {
        return Err(missing());
    }
    match family {
        Family::Persistence | Family::Nwp => {
            let marker = dir.join("MARKER.json");
            if !marker.exists() {
                return Err(missing());
            }
            Ok(if family == Family::Persistence {
                TrainedModel::Persistence
            } else {
                TrainedModel::Nwp
            })
        }
        Family::Linear | Family::Gbt => {
            let manifest_path = dir.join("suite.json");
            if !manifest_path.exists() {
                return Err(missing());
            }
            let manifest: SuiteManifest = read_json(&manifest_path)?;
            let mut models = BTreeMap::new();
            for p in json_files(&dir)? {
                if p == manifest_path {
                    continue;
                }
                let a: KeyedArtifact = read_json(&p)?;
                if a.features != manifest.features {
                    return Err(Error::Integrity(format!("{} has a different feature set", p.display())));
                }
                if let KeyedModel::Linear { model, .. } = &a.model {
                    model.validate()?;
                }
                if let KeyedModel::Gbt { model } = &a.model {
                    model.validate()?;
                }
                models.insert(a.key, a.model);
            }
            if models.len() != manifest.n_models {
                return Err(Error::Integrity(format!(
                    "{} lists {} models but {} were found",
                    manifest_path.display(),
                    manifest.n_models,
                    models.len()
                )));
            }
            Ok(TrainedModel::Keyed(KeyedSuite {
                family: manifest.family,
                features: manifest.features,
                models,
                untrained: manifest.untrained,
            }))
        }
        Family::LocalDnn => {
            let models = json_files(&dir)?
                .iter()
                .map(|p| {
                    let m: SiteMlp = read_json(p)?;
                    m.model.validate()?;
                    Ok(m)
                })
                .collect::<Result<Vec<_>>>()?;
            if models.is_empty() {
                return Err(missing());
            }
            Ok(TrainedModel::LocalDnn(models))
        }
        Family::GlobalDnn => {
            let p = dir.join("model.json");
            if !p.exists() {
                return Err(missing());
            }
            let a: GlobalArtifact = read_json(&p)?;
            a.model.validate()?;
            if a.partition_hash != partition_hash(&a.partition) {
                return Err(Error::Integrity(format!("{}: partition hash does not match", p.display())));
            }
            Ok(TrainedModel::GlobalDnn(a.model))
        }
    }
}

fn report_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out.join("report")
}

fn write_report_files(dir: &Path, report: &EvalReport) -> Result<()> {
    let cells = dir.join("cells.csv");
    write_cells(report, create(&cells)?)?;
    let hist = dir.join("histogram.csv");
    write_histograms(report, create(&hist)?)?;
    write_json(&dir.join("summary.json"), report, true)?;
    let tables = dir.join("tables.txt");
    fs::write(&tables, render_tables(report)).map_err(|e| Error::io(&tables, e))
}

/// Evaluates stored artifacts on the test split of the evaluation sites.
pub fn cmd_evaluate(cfg: &RunConfig, families: &[Family]) -> Result<EvalReport> {
    let prep = Prepared::new(load_dataset(cfg)?, cfg)?;
    if prep.partition.eval_sites.is_empty() {
        return Err(Error::Parameter("no evaluation sites".into()));
    }
    let models = families
        .iter()
        .map(|&f| load_model(cfg, f))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&TrainedModel> = models.iter().collect();
    let (records, report) = evaluate_models(&prep, &refs, cfg.skill_window)?;
    let dir = report_dir(cfg);
    mkdir(&dir)?;
    let rec_path = dir.join("records.csv");
    let mut w = create(&rec_path)?;
    write_records(&records, &mut w)?;
    w.flush().map_err(|e| Error::io(&rec_path, e))?;
    write_report_files(&dir, &report)?;
    Ok(report)
}

/// Recomputes every report file from `records.csv` and returns the tables.
pub fn cmd_report(cfg: &RunConfig) -> Result<String> {
    let dir = report_dir(cfg);
    let rec_path = dir.join("records.csv");
    let f = File::open(&rec_path).map_err(|e| Error::io(&rec_path, e))?;
    let records = read_records(BufReader::new(f), &rec_path.display().to_string())?;
    let report = aggregate_report(&records, cfg.skill_window)?;
    write_report_files(&dir, &report)?;
    Ok(render_tables(&report))
}
