//! Tree-structured Parzen search over the boosted-tree settings, scored by
//! validation rRMSE.

use chrono::NaiveDate;
use ghicast::dataset::{DateRange, SplitBoundaries};
use ghicast::hyperopt::{smbo_optimize, SearchSpace, SmboOptions};
use ghicast::pipeline::commands::search_objective;
use ghicast::pipeline::{Family, Prepared, RunConfig};
use ghicast::synth::{gen_dataset, SynthConfig};

fn day(m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2016, m, d).unwrap()
}

fn main() -> ghicast::Result<()> {
    let cfg = RunConfig {
        synth: SynthConfig {
            n_sites: 3,
            start_date: day(3, 1),
            end_date: day(7, 31),
            ..SynthConfig::default()
        },
        split: SplitBoundaries {
            train: DateRange::new(day(3, 1), day(5, 31)),
            validation: DateRange::new(day(6, 1), day(6, 30)),
            test: DateRange::new(day(7, 1), day(7, 31)),
        },
        ..RunConfig::default()
    };
    let prep = Prepared::new(gen_dataset(&cfg.synth)?, &cfg)?;
    let space = SearchSpace::gbt_default();
    let (best, history) = smbo_optimize(
        |p| search_objective(&prep, &cfg, Family::Gbt, p),
        &space,
        12,
        cfg.seed,
        &SmboOptions::default(),
    )?;
    for t in &history.trials {
        let point = serde_json::to_string(&t.point).expect("points serialize");
        println!("trial {:2}: {:6.2}%  {point}", t.index, t.performance);
    }
    println!("best trial {} with validation rRMSE {:.2}%", best.index, best.performance);
    Ok(())
}
