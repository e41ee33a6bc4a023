//! File formats and command-line front end for `cbid-core`.
//!
//! Subcommands: `mine`, `train`, `encode`, `retrieve`, `classify`, `eval`,
//! `gradcheck`. Exit status is 0 on success, 2 on usage errors, 3 on data
//! errors, 4 when a primal solve does not converge and 1 when the gradient
//! check fails.

pub mod commands;
pub mod config;
mod error;
pub mod formats;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cbid_core::data::Mode;
use commands::{Inputs, MetricChoice, Rule};

pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "cbid", version, about = "Learn, encode and search weighted binary codes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mine nearest-neighbour triplets in the original feature space.
    Mine(Opts),
    /// Learn hash functions and Hamming weights; writes the model and a trace.
    Train(Opts),
    /// Encode features into a code database.
    Encode(Opts),
    /// Write the k nearest database entries of every query.
    Retrieve(Opts),
    /// Predict query labels.
    Classify(Opts),
    /// Report accuracy and precision@k.
    Eval(Opts),
    /// Check the weak-learner gradient against finite differences.
    Gradcheck(Opts),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Image,
    Patch,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Auto,
    Uniform,
    Weighted,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RuleArg {
    Knn,
    I2c,
}

#[derive(Debug, Args)]
pub struct Opts {
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub triplets: Option<PathBuf>,
    /// key=value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Code database file.
    #[arg(long)]
    pub db: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Neighbours for retrieval, kNN and precision@k.
    #[arg(long)]
    pub k: Option<usize>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Trace output of `train` (default: `<out>.trace.csv`).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Distance for retrieval and kNN; `auto` is uniform Hamming for image
    /// models and the learned weights for patch models.
    #[arg(long, value_enum, default_value = "auto")]
    pub metric: MetricArg,
    /// Image-mode classifier: k nearest neighbours or image-to-class.
    #[arg(long, value_enum, default_value = "knn")]
    pub rule: RuleArg,
}

impl From<&Opts> for Inputs {
    fn from(o: &Opts) -> Self {
        Inputs {
            features: o.features.clone(),
            labels: o.labels.clone(),
            triplets: o.triplets.clone(),
            config: o.config.clone(),
            model: o.model.clone(),
            db: o.db.clone(),
            mode: o.mode.map(|m| match m {
                ModeArg::Image => Mode::Image,
                ModeArg::Patch => Mode::Patch,
            }),
            k: o.k,
            seed: o.seed,
            out: o.out.clone(),
            trace: o.trace.clone(),
            metric: match o.metric {
                MetricArg::Auto => MetricChoice::Auto,
                MetricArg::Uniform => MetricChoice::Uniform,
                MetricArg::Weighted => MetricChoice::Weighted,
            },
            rule: match o.rule {
                RuleArg::Knn => Rule::Knn,
                RuleArg::I2c => Rule::I2c,
            },
        }
    }
}

/// Runs one subcommand and returns its stdout text.
pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Mine(o) => commands::mine(&o.into()),
        Command::Train(o) => commands::train(&o.into()),
        Command::Encode(o) => commands::encode(&o.into()),
        Command::Retrieve(o) => commands::retrieve(&o.into()),
        Command::Classify(o) => commands::classify(&o.into()),
        Command::Eval(o) => commands::eval(&o.into()),
        Command::Gradcheck(o) => commands::gradcheck(&o.into()),
    }
}
