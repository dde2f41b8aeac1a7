//! Generates a small synthetic network, writes it as CSV and reads it back.

use std::fs::File;

use chrono::NaiveDate;
use ghicast::dataset::{load_sites, write_nwp, write_observations};
use ghicast::synth::{gen_dataset, SynthConfig};

fn main() -> ghicast::Result<()> {
    let cfg = SynthConfig {
        n_sites: 5,
        start_date: NaiveDate::from_ymd_opt(2016, 5, 1).unwrap(),
        end_date: NaiveDate::from_ymd_opt(2016, 5, 31).unwrap(),
        seed: 42,
        ..SynthConfig::default()
    };
    let sites = gen_dataset(&cfg)?;
    for s in &sites {
        let ground: Vec<f64> = s.ground_ghi.iter().flatten().copied().collect();
        let missing = s.ground_ghi.len() - ground.len();
        let mean = ground.iter().sum::<f64>() / ground.len() as f64;
        let clear = s.clearsky_ghi.iter().sum::<f64>() / s.len() as f64;
        println!(
            "{} ({:.2}N {:.2}E): mean GHI {mean:6.1} W/m2, clear-sky {clear:6.1}, {missing} missing slots",
            s.site_id, s.location.latitude_deg, s.location.longitude_deg
        );
    }

    let dir = tempfile::tempdir().expect("temporary directory");
    let obs = dir.path().join("observations.csv");
    let nwp = dir.path().join("nwp.csv");
    write_observations(&sites, File::create(&obs).expect("create file"))?;
    write_nwp(&sites, File::create(&nwp).expect("create file"))?;
    let back = load_sites(&[obs, nwp])?;
    println!("reloaded {} sites x {} slots from CSV", back.len(), back[0].len());
    Ok(())
}
