use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::NaiveDate;
use ghicast::dataset::{DateRange, SplitBoundaries};
use ghicast::pipeline::{Family, RunConfig};
use ghicast::synth::SynthConfig;
use tempfile::TempDir;

fn day(m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2015, m, d).unwrap()
}

/// Four sites over four months: January and February train, March
/// validates, April tests.
fn small_config(out: &Path) -> RunConfig {
    let mut cfg = RunConfig {
        seed: 11,
        out: out.to_path_buf(),
        synth: SynthConfig {
            n_sites: 4,
            start_date: day(1, 1),
            end_date: day(4, 30),
            ..SynthConfig::default()
        },
        split: SplitBoundaries {
            train: DateRange::new(day(1, 1), day(2, 28)),
            validation: DateRange::new(day(3, 1), day(3, 31)),
            test: DateRange::new(day(4, 1), day(4, 30)),
        },
        families: vec![Family::Persistence, Family::Linear],
        ..RunConfig::default()
    };
    for s in [&mut cfg.global_dnn, &mut cfg.local_dnn] {
        s.hidden = vec![8];
        s.train.max_epochs = 4;
        s.train.patience = 2;
        s.train.n_starts = 1;
    }
    cfg.search.max_epochs = 3;
    cfg
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new(cfg: impl FnOnce(&mut RunConfig)) -> Self {
        let dir = TempDir::new().unwrap();
        let mut c = small_config(&dir.path().join("run"));
        cfg(&mut c);
        fs::write(dir.path().join("run.toml"), toml::to_string(&c).unwrap()).unwrap();
        Self { dir }
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("run")
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_ghicast"))
            .arg("--config")
            .arg(self.dir.path().join("run.toml"))
            .args(args)
            .env("RUST_LOG", "warn")
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let o = self.run(args);
        assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    }

    fn read(&self, rel: &str) -> Vec<u8> {
        fs::read(self.out().join(rel)).unwrap()
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn gen_data_is_byte_identical_across_runs() {
    let a = Workspace::new(|_| {});
    let b = Workspace::new(|_| {});
    a.ok(&["gen-data"]);
    b.ok(&["gen-data", "--threads", "2"]);
    for f in ["data/observations.csv", "data/nwp.csv", "data/manifest.json"] {
        assert_eq!(a.read(f), b.read(f), "{f} differs");
    }
    let c = Workspace::new(|_| {});
    c.ok(&["gen-data", "--seed", "12"]);
    assert_ne!(a.read("data/observations.csv"), c.read("data/observations.csv"));
}

#[test]
fn hypersearch_resumes_and_refuses_corrupt_logs() {
    let w = Workspace::new(|_| {});
    w.ok(&["gen-data"]);
    let lines = |w: &Workspace| {
        String::from_utf8(w.read("search/linear/trials.jsonl"))
            .unwrap()
            .lines()
            .map(str::to_string)
            .collect::<Vec<_>>()
    };
    w.ok(&["hypersearch", "--family", "linear", "--trials", "1"]);
    let first = lines(&w);
    assert_eq!(first.len(), 1);
    w.ok(&["hypersearch", "--family", "linear", "--trials", "4"]);
    let resumed = lines(&w);
    assert_eq!(resumed.len(), 4);
    assert_eq!(resumed[0], first[0]);
    // a finished search does no further work
    w.ok(&["hypersearch", "--family", "linear", "--trials", "4"]);
    assert_eq!(lines(&w), resumed);

    let log = w.out().join("search/linear/trials.jsonl");
    fs::write(&log, format!("{}\n{{not json\n", first[0])).unwrap();
    let o = w.run(&["hypersearch", "--family", "linear", "--trials", "4"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("restart"));
    w.ok(&["hypersearch", "--family", "linear", "--trials", "2", "--restart"]);
    assert_eq!(lines(&w).len(), 2);
    assert!(w.out().join("search/linear/best.json").exists());

    let o = w.run(&["hypersearch", "--family", "persistence"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn persistence_evaluates_to_zero_skill() {
    let w = Workspace::new(|_| {});
    w.ok(&["gen-data"]);
    w.ok(&["train", "--family", "persistence"]);
    let files: Vec<_> = fs::read_dir(w.out().join("models/persistence")).unwrap().collect();
    assert_eq!(files.len(), 1);
    assert!(w.out().join("models/persistence/MARKER.json").exists());

    let tables = w.ok(&["evaluate", "--models", "persistence"]);
    assert!(tables.contains("persistence"));
    let summary: serde_json::Value = serde_json::from_slice(&w.read("report/summary.json")).unwrap();
    let skill = summary["models"][0]["overall"]["skill"].as_f64().unwrap();
    assert!(skill.abs() < 1e-6, "persistence skill {skill}");

    // report rebuilds identical files from the stored records
    let before = w.read("report/cells.csv");
    w.ok(&["report"]);
    assert_eq!(w.read("report/cells.csv"), before);
}

#[test]
fn global_model_artifact_has_the_configured_shape() {
    let w = Workspace::new(|c| c.global_dnn.hidden = vec![208, 63]);
    w.ok(&["gen-data"]);
    let out = w.ok(&["train", "--family", "global-dnn"]);
    assert!(out.contains("global-dnn: 1 artifacts"));
    let a: serde_json::Value = serde_json::from_slice(&w.read("models/global-dnn/model.json")).unwrap();
    let sizes: Vec<u64> = a["model"]["layer_sizes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert_eq!(sizes, vec![22, 208, 63, 6]);
    w.ok(&["train", "--family", "persistence"]);
    let tables = w.ok(&["evaluate", "--models", "persistence,global-dnn"]);
    assert!(tables.contains("global-dnn"));
}

#[test]
fn empty_test_period_is_rejected() {
    let w = Workspace::new(|c| c.split.test = DateRange::new(day(6, 1), day(6, 30)));
    w.ok(&["gen-data"]);
    w.ok(&["train", "--family", "persistence"]);
    let o = w.run(&["evaluate", "--models", "persistence"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let w = Workspace::new(|_| {});
    // no dataset yet
    assert_eq!(code(&w.run(&["train", "--family", "linear"])), 3);
    assert_eq!(code(&w.run(&["evaluate", "--models", "persistence"])), 3);
    assert_eq!(code(&w.run(&["evaluate", "--models", "nonsense"])), 2);

    fs::write(w.dir.path().join("run.toml"), "sed = 3\n").unwrap();
    assert_eq!(code(&w.run(&["gen-data"])), 2);

    let diverging = Workspace::new(|c| {
        c.global_dnn.train.learning_rate = 1e300;
        c.global_dnn.train.dropout = 0.0;
    });
    diverging.ok(&["gen-data"]);
    let o = diverging.run(&["train", "--family", "global-dnn"]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}
