//! Per-site linear, boosted-tree and neural models trained on ground data.

use chrono::NaiveDate;
use ghicast::dataset::{DateRange, SplitBoundaries};
use ghicast::metrics::report::render_tables;
use ghicast::pipeline::{evaluate_models, train_family, Family, Prepared, RunConfig, TrainedModel};
use ghicast::synth::{gen_dataset, SynthConfig};

fn day(m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2016, m, d).unwrap()
}

fn main() -> ghicast::Result<()> {
    let mut cfg = RunConfig {
        synth: SynthConfig {
            n_sites: 4,
            start_date: day(3, 1),
            end_date: day(8, 31),
            ..SynthConfig::default()
        },
        split: SplitBoundaries {
            train: DateRange::new(day(3, 1), day(5, 31)),
            validation: DateRange::new(day(6, 1), day(6, 30)),
            test: DateRange::new(day(7, 1), day(8, 31)),
        },
        // local models need no training sites of their own; keep three for evaluation
        train_sites: vec!["S01".into()],
        ..RunConfig::default()
    };
    cfg.local_dnn.hidden = vec![32, 16];
    cfg.local_dnn.train.max_epochs = 40;
    cfg.local_dnn.train.n_starts = 1;

    let prep = Prepared::new(gen_dataset(&cfg.synth)?, &cfg)?;
    let mut models = Vec::new();
    for f in [Family::Persistence, Family::Linear, Family::Gbt, Family::LocalDnn] {
        let m = train_family(&prep, f, &cfg)?;
        if let TrainedModel::Keyed(suite) = &m {
            println!("{f}: {} keyed models, {} left untrained", suite.models.len(), suite.untrained.len());
        }
        models.push(m);
    }
    let (_, report) = evaluate_models(&prep, &models.iter().collect::<Vec<_>>(), cfg.skill_window)?;
    print!("{}", render_tables(&report));
    Ok(())
}
