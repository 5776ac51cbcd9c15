//! Pipeline front end: one TOML config drives ingestion, accessibility,
//! graph construction, training, evaluation and forecasting, with artifacts
//! cached in a workdir.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use ggcnn_core::evalbench::ModelKind;

pub use commands::Context;
pub use config::RunConfig;
pub use error::{CliError, Result, EXIT_RUNTIME, EXIT_USAGE};
pub use manifest::{Manifest, WorkdirLock};

#[derive(Debug, Parser)]
#[command(name = "ggcnn", version, about = "Station-level bike demand forecasting with gated graph convolutions")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Re-run stages even when the manifest says they are current.
    #[arg(long, global = true)]
    pub force: bool,
    /// Seed for training and synthetic generation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Artifact directory (overrides `paths.workdir`).
    #[arg(long, global = true)]
    pub workdir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse trips and weather, aggregate hourly demand and build features.
    Ingest,
    /// Per-station cumulative-opportunity accessibility.
    Access,
    /// Dynamic correlation graphs from the demand series.
    Graph,
    /// Train the configured model.
    Train,
    /// Score models on the test slots.
    Eval {
        /// Comma-separated subset of persistence,ols,mlp,gcn,ggcnn.
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<ModelKind>>,
    },
    /// Forecast the slot after the data ends with the trained checkpoint.
    Predict,
    /// Generate a synthetic dataset in the ingest artifact format.
    Synth {
        #[arg(long)]
        stations: Option<usize>,
        #[arg(long)]
        slots: Option<usize>,
    },
    /// Compare analytic gradients with finite differences.
    GradCheck,
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut cfg = cfg.finalize(cli.seed, cli.workdir.clone())?;
    match &cli.command {
        Command::Eval { models: Some(m) } => cfg.eval.models = m.clone(),
        Command::Synth { stations, slots } => {
            if let Some(n) = stations {
                cfg.synth.n_stations = *n;
            }
            if let Some(t) = slots {
                cfg.synth.n_slots = *t;
            }
        }
        _ => {}
    }
    let ctx = Context::new(cfg, cli.force);
    let _lock = WorkdirLock::acquire(&ctx.workdir)?;
    match cli.command {
        Command::Ingest => commands::cmd_ingest(&ctx),
        Command::Access => commands::cmd_access(&ctx),
        Command::Graph => commands::cmd_graph(&ctx),
        Command::Train => commands::cmd_train(&ctx),
        Command::Eval { .. } => commands::cmd_eval(&ctx),
        Command::Predict => commands::cmd_predict(&ctx),
        Command::Synth { .. } => commands::cmd_synth(&ctx),
        Command::GradCheck => commands::cmd_grad_check(&ctx),
    }?;
    Ok(())
}
