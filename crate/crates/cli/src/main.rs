//! Command-line front end for the routing simulator.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;
use skyroute::env::replay_trace;
use skyroute::harness::{self, ExperimentConfig, SCENARIOS};

/// Overrides `master_seed` from the config file when set.
const SEED_VAR: &str = "SKYROUTE_MASTER_SEED";

#[derive(Parser)]
#[command(name = "skyroute", version, about = "Secure UAV routing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its CSVs.
    Run {
        config: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        /// Worker threads; overrides the config value.
        #[arg(short, long)]
        workers: Option<usize>,
    },
    /// List the available scenarios.
    ListScenarios,
    /// Check a config file without running it.
    Validate { config: PathBuf },
    /// Recompute episode metrics from a demand trace CSV.
    Replay {
        trace: PathBuf,
        /// Demand count of the episode; defaults to the distinct ids in the trace.
        #[arg(long)]
        n_demands: Option<usize>,
    },
}

fn load(path: &PathBuf) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Ok(v) = std::env::var(SEED_VAR) {
        cfg.master_seed = v
            .trim()
            .parse()
            .with_context(|| format!("{SEED_VAR}={v} is not an unsigned integer"))?;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out, workers } => {
            let mut cfg = load(&config)?;
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let summary = harness::run(&cfg, &out)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::ListScenarios => {
            for (name, about) in SCENARIOS {
                println!("{name}\t{about}");
            }
        }
        Command::Validate { config } => {
            let cfg = load(&config)?;
            println!(
                "{}",
                json!({"ok": true, "scenario": cfg.scenario, "name": cfg.name, "master_seed": cfg.master_seed})
            );
        }
        Command::Replay { trace, n_demands } => {
            let rows = harness::read_trace(&trace)?;
            let n = n_demands.unwrap_or_else(|| {
                rows.iter().map(|r| r.demand_id).collect::<std::collections::BTreeSet<_>>().len()
            });
            let m = replay_trace(&rows, n);
            println!("{}", serde_json::to_string_pretty(&m)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let details: Vec<String> = match e.chain().find_map(|c| c.downcast_ref::<skyroute::Error>()) {
                Some(skyroute::Error::InvalidConfig(errs)) => errs.clone(),
                _ => e.chain().skip(1).map(|c| c.to_string()).collect(),
            };
            eprintln!("{}", json!({"ok": false, "error": e.to_string(), "details": details}));
            ExitCode::FAILURE
        }
    }
}
