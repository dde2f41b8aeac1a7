use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ghicast::pipeline::{self, parse_families, Family, RunConfig};
use ghicast::{Error, Result};

/// Multi-site solar irradiance forecasting benchmark.
///
/// Settings come from defaults, then the `--config` file, then flags.
#[derive(Parser)]
#[command(name = "ghicast", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed; every random stream derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset.
    GenData,
    /// Search hyperparameters and input features for one family.
    Hypersearch {
        #[arg(long, default_value = "global-dnn")]
        family: Family,
        #[arg(long)]
        trials: Option<usize>,
        /// Discard an existing trial log instead of resuming it.
        #[arg(long)]
        restart: bool,
    },
    /// Train one family, or every configured family.
    Train {
        #[arg(long)]
        family: Option<Family>,
    },
    /// Evaluate trained models on the test period.
    Evaluate {
        /// Comma-separated families; defaults to the configured list.
        #[arg(long)]
        models: Option<String>,
    },
    /// Rebuild report tables from stored evaluation records.
    Report,
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    let threads = cfg.threads;
    pipeline::with_threads(threads, move || match cli.command {
        Command::GenData => {
            let m = pipeline::cmd_gen_data(&cfg)?;
            println!("{} sites, {} hourly slots, seed {}", m.n_sites, m.n_slots, m.seed);
            Ok(())
        }
        Command::Hypersearch { family, trials, restart } => {
            if let Some(t) = trials {
                cfg.search.trials = t;
            }
            cfg.validate()?;
            let best = pipeline::cmd_hypersearch(&cfg, family, restart)?;
            println!("best trial {}: validation rRMSE {:.3}%", best.index, best.performance);
            Ok(())
        }
        Command::Train { family } => {
            let families = family.map_or_else(|| cfg.families.clone(), |f| vec![f]);
            for f in families {
                let n = pipeline::cmd_train(&cfg, f)?;
                println!("{f}: {n} artifacts");
            }
            Ok(())
        }
        Command::Evaluate { models } => {
            let families = match models {
                Some(list) => parse_families(&list)?,
                None => cfg.families.clone(),
            };
            pipeline::cmd_evaluate(&cfg, &families)?;
            print!("{}", pipeline::cmd_report(&cfg)?);
            Ok(())
        }
        Command::Report => {
            print!("{}", pipeline::cmd_report(&cfg)?);
            Ok(())
        }
    })?
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    e.exit_code() as u8
}
