//! Command-line front end for training, evaluating and running ozone peak
//! forecasters.

pub mod commands;
pub mod config;
mod files;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use config::{ConfigFile, Overrides, RunConfig};

pub const THREADS_ENV: &str = "OZONECAST_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ozonecast", version, about = "Next-day ozone peak forecasting with pruned neural networks")]
pub struct Cli {
    #[command(flatten)]
    pub options: GlobalOptions,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct GlobalOptions {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Exceedance threshold in concentration units.
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Interval confidence level in (0, 1).
    #[arg(long, global = true)]
    pub confidence: Option<f64>,
    /// Hidden-unit sizes to compare: `lo-hi` or `0,1,3`.
    #[arg(long, global = true)]
    pub hidden_range: Option<String>,
    /// `a,b,theta,multiplier` or `none`.
    #[arg(long, global = true)]
    pub balance: Option<String>,
    /// `observed` or `interval`.
    #[arg(long, global = true)]
    pub target_mode: Option<String>,
    /// Comma list of `pers`, `lin`, `logistic`, or `none`.
    #[arg(long, global = true)]
    pub baselines: Option<String>,
    /// Data the architecture criterion is computed on: `train` or `validation`.
    #[arg(long, global = true)]
    pub bic_on: Option<String>,
    /// `mean` or `prediction`.
    #[arg(long, global = true)]
    pub interval: Option<String>,
    /// Training restarts per network.
    #[arg(long, global = true)]
    pub restarts: Option<usize>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub train: Option<PathBuf>,
    #[arg(long, global = true)]
    pub validation: Option<PathBuf>,
    /// Model file to write (train) or read (other commands).
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select, train and prune the regression network and the classifier.
    Train,
    /// Score the model and baselines on the validation file.
    Evaluate,
    /// Forecast days from a file of predictors.
    Forecast {
        #[arg(long)]
        input: PathBuf,
    },
    /// Append a season to the training archive and train again.
    Retrain {
        #[arg(long)]
        season: PathBuf,
    },
    /// Write plot-ready series from an evaluation.
    Plotdata,
    /// Write a synthetic season and a matching config.
    Synth,
}

impl GlobalOptions {
    fn overrides(&self) -> Overrides {
        Overrides {
            train: self.train.clone(),
            validation: self.validation.clone(),
            model: self.model.clone(),
            out_dir: self.out_dir.clone(),
            seed: self.seed,
            threshold: self.threshold,
            confidence: self.confidence,
            hidden_range: self.hidden_range.clone(),
            balance: self.balance.clone(),
            target_mode: self.target_mode.clone(),
            baselines: self.baselines.clone(),
            bic_on: self.bic_on.clone(),
            interval: self.interval.clone(),
            restarts: self.restarts,
        }
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        RunConfig::resolve(file, self.overrides())
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .with_context(|| format!("{THREADS_ENV} must be a positive integer, got `{v}`"))?;
        anyhow::ensure!(n >= 1, "{THREADS_ENV} must be at least 1");
        // A second call in the same process finds the pool already built.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    configure_threads()?;
    let cfg = cli.options.resolve()?;
    match &cli.command {
        Command::Train => commands::train(&cfg).map(|_| ()),
        Command::Evaluate => commands::evaluate(&cfg).map(|_| ()),
        Command::Forecast { input } => commands::forecast(&cfg, input),
        Command::Retrain { season } => commands::retrain(&cfg, season).map(|_| ()),
        Command::Plotdata => commands::plotdata(&cfg),
        Command::Synth => commands::synth(&cfg),
    }
}
