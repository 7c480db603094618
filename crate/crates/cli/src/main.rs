use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use banditmesh_core::harness::config::{ExperimentConfig, ExperimentKind};
use banditmesh_core::harness::run::{calibrate_kappa, default_threads, run_experiment};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "banditmesh",
    version,
    about = "Cooperative heavy-tailed bandits over random graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replications: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long, env = "BANDITMESH_THREADS")]
        threads: Option<usize>,
    },
    /// Estimate the broadcast constant kappa and write it to the config's kappa_file.
    CalibrateKappa {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replications: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the experiment kinds a config can name.
    ListExperiments,
}

fn load(
    path: &Path,
    seed: Option<u64>,
    replications: Option<u64>,
    out: Option<PathBuf>,
) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(r) = replications {
        cfg.replications = r;
    }
    if let Some(o) = out {
        cfg.output = o;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            seed,
            replications,
            out,
            threads,
        } => {
            let cfg = load(&config, seed, replications, out)?;
            let threads = threads.unwrap_or_else(default_threads);
            let outcome = run_experiment(&cfg, threads)?;
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if let Some(r) = outcome.summary.get("regret") {
                println!("regret mean {} std {}", r["mean"], r["std"]);
            }
        }
        Command::CalibrateKappa {
            config,
            seed,
            replications,
            out,
        } => {
            let cfg = load(&config, seed, replications, out)?;
            let (est, path) = calibrate_kappa(&cfg)?;
            println!(
                "kappa {} ({}-quantile {} rounds over {} broadcasts, {} timeouts)",
                est.kappa, est.level, est.quantile_rounds, est.replications, est.timeouts
            );
            println!("wrote {}", path.display());
        }
        Command::ListExperiments => {
            for k in ExperimentKind::ALL {
                println!("{:<16} {}", k.name(), k.describe());
            }
        }
    }
    Ok(())
}
