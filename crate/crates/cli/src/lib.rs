//! Command-line front end: synthetic data, spectral reports, dictionary
//! training, super-resolution, adversarial refinement and localization
//! experiments, each writing a content-addressed run directory.

pub mod commands;
pub mod config;
pub mod error;
pub mod run;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{load, CommandConfig};
use crate::error::{CliError, Result};
use crate::run::RunOutcome;

pub const THREADS_ENV: &str = "TUBALSR_THREADS";

#[derive(Debug, Parser)]
#[command(name = "tubalsr", version, about = "Tensor sparse-coding radio-map super-resolution experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON config; defaults apply to every omitted field.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Parent directory for run directories.
    #[arg(long, global = true, default_value = "runs")]
    pub out: PathBuf,

    #[arg(long, short, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthetic path-loss radio map or planted low-tubal-rank tensor.
    Synth,
    /// Energy CDFs of the t-SVD and the unfolding matrix SVD.
    SvdReport {
        /// Tensor to analyze; overrides `input` in the config.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Coupled dictionary pair from a fine radio map.
    TrainDict,
    /// Sparse-coding super-resolution against the interpolation baseline.
    SuperResolve,
    /// Adversarial refinement of the sparse-coding generator.
    TrainTgan,
    /// Localization error CDFs: wKNN and classifier with and without SR.
    Localize,
    /// Every stage above in one run directory.
    Pipeline,
}

/// Caps the global rayon pool at `TUBALSR_THREADS` when set.
pub fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV}={v:?} is not a positive integer")))?;
    // a pool built earlier in the process stays in place
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(cli: &Cli) -> Result<RunOutcome> {
    let cfg = cli.config.as_deref();
    let out = &cli.out;
    match &cli.command {
        Command::Synth => commands::cmd_synth(&load(cfg, cli.seed)?, out),
        Command::SvdReport { input } => {
            let mut c: config::SvdReportConfig = config::read(cfg)?;
            if input.is_some() {
                c.input.clone_from(input);
            }
            c.validate()?;
            commands::cmd_svd_report(&c, out)
        }
        Command::TrainDict => commands::cmd_train_dict(&load(cfg, cli.seed)?, out),
        Command::SuperResolve => commands::cmd_super_resolve(&load(cfg, cli.seed)?, out),
        Command::TrainTgan => commands::cmd_train_tgan(&load(cfg, cli.seed)?, out),
        Command::Localize => commands::cmd_localize(&load(cfg, cli.seed)?, out),
        Command::Pipeline => commands::cmd_pipeline(&load(cfg, cli.seed)?, out),
    }
}
