use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::{self, Context};
use crate::config::RunConfig;
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "graphred", version, about = "RED graph-signal denoising")]
pub struct Cli {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (defaults to one per core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset bundle.
    Generate,
    /// Grid-search scalar hyperparameters on the training split.
    Tune(DataArgs),
    /// Denoise with tuned parameters and write signals and metrics.
    Denoise(DataArgs),
    /// Train unrolled per-layer parameters.
    Train(DataArgs),
    /// Homogeneity and passivity checks.
    Check(DataArgs),
    /// Export LR and RED filter responses.
    Spectrum(DataArgs),
    /// Metrics for tuned methods and trained runs.
    Eval(DataArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Dataset bundle directory.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Tuned parameter file (tuned.json).
    #[arg(long)]
    pub params: Option<PathBuf>,
}

impl Cli {
    pub fn context(&self) -> Result<Context> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        cfg.validate()?;
        let args = match &self.command {
            Command::Generate => DataArgs::default(),
            Command::Tune(a)
            | Command::Denoise(a)
            | Command::Train(a)
            | Command::Check(a)
            | Command::Spectrum(a)
            | Command::Eval(a) => a.clone(),
        };
        Ok(Context {
            seed: self.seed.or(cfg.seed).unwrap_or(0),
            out: self.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| "out".into()),
            dataset: args.dataset.or_else(|| cfg.dataset.clone()),
            tuned: args.params.or_else(|| cfg.tuned.clone()),
            cfg,
        })
    }
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    let ctx = cli.context()?;
    commands::with_threads(ctx.cfg.threads, || match cli.command {
        Command::Generate => commands::generate(&ctx),
        Command::Tune(_) => commands::tune(&ctx).map(drop),
        Command::Denoise(_) => commands::denoise(&ctx).map(drop),
        Command::Train(_) => commands::train(&ctx).map(drop),
        Command::Check(_) => commands::check(&ctx).map(drop),
        Command::Spectrum(_) => commands::spectrum(&ctx).map(drop),
        Command::Eval(_) => commands::eval(&ctx).map(drop),
    })?
}
