//! The full benchmark on a small network: every model family, the
//! report tables and the forecast skill against persistence.

use chrono::NaiveDate;
use ghicast::dataset::{DateRange, SplitBoundaries};
use ghicast::metrics::forecast_skill;
use ghicast::metrics::report::render_tables;
use ghicast::pipeline::{run_protocol, RunConfig};
use ghicast::synth::{gen_dataset, SynthConfig};

fn day(m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2016, m, d).unwrap()
}

fn main() -> ghicast::Result<()> {
    let mut cfg = RunConfig {
        synth: SynthConfig {
            n_sites: 6,
            start_date: day(1, 1),
            end_date: day(9, 30),
            ..SynthConfig::default()
        },
        split: SplitBoundaries {
            train: DateRange::new(day(1, 1), day(5, 31)),
            validation: DateRange::new(day(6, 1), day(6, 30)),
            test: DateRange::new(day(7, 1), day(9, 30)),
        },
        train_sites: vec!["S01".into(), "S02".into(), "S03".into()],
        ..RunConfig::default()
    };
    for s in [&mut cfg.global_dnn, &mut cfg.local_dnn] {
        s.train.max_epochs = 30;
        s.train.n_starts = 1;
    }
    let outcome = run_protocol(gen_dataset(&cfg.synth)?, &cfg)?;
    print!("{}", render_tables(&outcome.report));
    println!();
    for (model, records) in &outcome.records {
        let s = forecast_skill(records, cfg.skill_window)?;
        println!("{model:<12} skill {:6.2}% over {} windows", s.percent, s.windows);
    }
    Ok(())
}
