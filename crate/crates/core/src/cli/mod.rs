//! Command-line front end: dataset files, run configuration, training loop
//! and the five subcommands.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod train;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

pub use commands::{cmd_eval, cmd_monitor, cmd_plot, cmd_simulate, cmd_train};
pub use config::{EvalConfig, PathsConfig, RunConfig, SimulationConfig};
pub use dataset::{load_dataset, read_dataset, save_dataset, write_dataset, DatasetHeader, DATASET_VERSION};
pub use train::{
    mean_bce, predict_all, prepare_all, rebalance_indices, split_by_episode, train_model, EpochLog,
    TrainConfig, TrainLog,
};

use crate::error::{PaadError, Result};
use crate::model::{AttentionKind, FusionMode, PathView};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FusionArg {
    Both,
    LidarOnly,
    CameraOnly,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum AttentionArg {
    Mha,
    Mlp,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PathViewArg {
    Front,
    Bev,
}

#[derive(Debug, Parser)]
#[command(name = "paad", about = "Proactive anomaly detection for field robots")]
pub struct Cli {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file (or directory for `plot`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub fusion_mode: Option<FusionArg>,
    #[arg(long, global = true, value_enum)]
    pub attention: Option<AttentionArg>,
    /// Drops the LiDAR reconstruction and KL terms.
    #[arg(long, global = true)]
    pub no_reconstruction: bool,
    #[arg(long, global = true, value_enum)]
    pub path_view: Option<PathViewArg>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate episodes and write a dataset file.
    Simulate,
    /// Train a detector on a dataset.
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate one or more checkpoints; several form an ablation grid.
    Eval {
        #[arg(long, required = true, num_args = 1..)]
        checkpoint: Vec<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Replay a dataset through the streaming monitor.
    Monitor {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Export PR curves and score densities from an eval report as CSV.
    Plot {
        #[arg(long)]
        report: PathBuf,
    },
}

impl Cli {
    /// Loads the configuration and applies command-line overrides.
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default().synced(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
            cfg.train.seed = s;
        }
        if let Some(m) = self.fusion_mode {
            cfg.model.fusion_mode = match m {
                FusionArg::Both => FusionMode::Both,
                FusionArg::LidarOnly => FusionMode::LidarOnly,
                FusionArg::CameraOnly => FusionMode::CameraOnly,
            };
        }
        if let Some(a) = self.attention {
            cfg.model.attention = match a {
                AttentionArg::Mha => AttentionKind::Mha,
                AttentionArg::Mlp => AttentionKind::Mlp,
            };
        }
        if self.no_reconstruction {
            cfg.model.reconstruction = false;
        }
        if let Some(v) = self.path_view {
            cfg.model.path_view = match v {
                PathViewArg::Front => PathView::Front,
                PathViewArg::Bev => PathView::Bev,
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn required<'a>(arg: &'a Option<PathBuf>, fallback: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    arg.as_deref()
        .or(fallback.as_deref())
        .ok_or_else(|| PaadError::Input(format!("missing --{what}")))
}

fn out_or<'a>(cli: &'a Cli, default: &'a str) -> &'a Path {
    cli.out.as_deref().unwrap_or(Path::new(default))
}

/// Runs a parsed command line and returns what should be printed.
pub fn run(cli: &Cli) -> Result<String> {
    let cfg = cli.run_config()?;
    match &cli.command {
        Command::Simulate => cmd_simulate(&cfg, out_or(cli, "dataset.bin")),
        Command::Train { dataset, resume } => {
            let ds = required(dataset, &cfg.paths.dataset, "dataset")?;
            Ok(cmd_train(&cfg, ds, resume.as_deref(), out_or(cli, "model.ckpt"))?.0)
        }
        Command::Eval { checkpoint, dataset } => {
            let ds = required(dataset, &cfg.paths.dataset, "dataset")?;
            Ok(cmd_eval(&cfg, checkpoint, ds, out_or(cli, "report.json"))?.0)
        }
        Command::Monitor { checkpoint, dataset } => {
            let ck = required(checkpoint, &cfg.paths.checkpoint, "checkpoint")?;
            let ds = required(dataset, &cfg.paths.dataset, "dataset")?;
            Ok(cmd_monitor(&cfg, ck, ds, out_or(cli, "events.csv"))?.0)
        }
        Command::Plot { report } => cmd_plot(report, out_or(cli, "plots")),
    }
}

/// Process entry point: parses `std::env::args`, prints the result and
/// returns the exit code.
pub fn main() -> i32 {
    env_logger::init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("paad: {e}");
            1
        }
    }
}
