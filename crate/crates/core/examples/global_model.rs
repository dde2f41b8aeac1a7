//! One satellite-driven network trained on a few sites and applied to
//! sites it has never seen.

use chrono::NaiveDate;
use ghicast::dataset::{DateRange, SplitBoundaries};
use ghicast::pipeline::{evaluate_models, train_family, Family, Prepared, RunConfig, TrainedModel};
use ghicast::synth::{gen_dataset, SynthConfig};

fn day(m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2016, m, d).unwrap()
}

fn main() -> ghicast::Result<()> {
    let mut cfg = RunConfig {
        synth: SynthConfig {
            n_sites: 8,
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
    cfg.global_dnn.train.max_epochs = 40;
    cfg.global_dnn.train.n_starts = 2;

    let prep = Prepared::new(gen_dataset(&cfg.synth)?, &cfg)?;
    let global = train_family(&prep, Family::GlobalDnn, &cfg)?;
    if let TrainedModel::GlobalDnn(g) = &global {
        println!(
            "architecture {:?}, trained on {:?}, best validation MSE {:.4} (start {})",
            g.model.layer_sizes(),
            g.train_sites,
            g.trace.best_val_mse(),
            g.trace.chosen_start
        );
    }
    let persistence = train_family(&prep, Family::Persistence, &cfg)?;
    let (_, report) = evaluate_models(&prep, &[&persistence, &global], cfg.skill_window)?;
    let (p, g) = (report.model("persistence").unwrap(), report.model("global-dnn").unwrap());
    println!("held-out site   persistence   global (rRMSE %)");
    for (site, cell) in &g.by_site {
        println!("{site:<15} {:11.2} {:8.2}", p.by_site[site].rrmse.unwrap(), cell.rrmse.unwrap());
    }
    Ok(())
}
