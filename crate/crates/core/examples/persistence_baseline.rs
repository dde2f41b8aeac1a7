//! Clear-sky persistence and raw NWP on the test half of a synthetic season.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use ghicast::dataset::{DateRange, SplitBoundaries};
use ghicast::pipeline::{evaluate_models, train_family, Family, Prepared, RunConfig};
use ghicast::synth::{gen_dataset, SynthConfig};

fn day(m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2016, m, d).unwrap()
}

fn main() -> ghicast::Result<()> {
    let cfg = RunConfig {
        synth: SynthConfig {
            n_sites: 6,
            start_date: day(3, 1),
            end_date: day(8, 31),
            ..SynthConfig::default()
        },
        split: SplitBoundaries {
            train: DateRange::new(day(3, 1), day(5, 31)),
            validation: DateRange::new(day(6, 1), day(6, 30)),
            test: DateRange::new(day(7, 1), day(8, 31)),
        },
        ..RunConfig::default()
    };
    let prep = Prepared::new(gen_dataset(&cfg.synth)?, &cfg)?;
    let models = [
        train_family(&prep, Family::Persistence, &cfg)?,
        train_family(&prep, Family::Nwp, &cfg)?,
    ];
    let (_, report) = evaluate_models(&prep, &models.iter().collect::<Vec<_>>(), cfg.skill_window)?;
    println!("rRMSE (%) by horizon");
    for m in &report.models {
        let row: BTreeMap<_, _> = m.by_horizon.iter().map(|(p, c)| (*p, c.rrmse.unwrap_or(f64::NAN))).collect();
        let cells: Vec<String> = row.values().map(|v| format!("{v:6.2}")).collect();
        println!("{:<12} {}", m.model, cells.join(" "));
    }
    Ok(())
}
