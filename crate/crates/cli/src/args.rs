use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mcl_core::Regime;

#[derive(Debug, Parser)]
#[command(name = "mcl", version, about = "Meta clustering learning experiments on synthetic identity pools")]
pub struct Cli {
    /// Worker threads for batch-level fan-out (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic identity pool as an MCLF feature file.
    Gen(GenArgs),
    /// Train an encoder under one regime.
    Train(TrainArgs),
    /// Run All, MCL and NaiveSplit at several split ratios on one pool.
    Compare(CompareArgs),
    /// Retrieval metrics of a checkpoint on held-out identities.
    Eval(EvalArgs),
    /// Write the embeddings of a pool as an MCLF file.
    DumpEmbeddings(DumpArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub ids: usize,
    #[arg(long)]
    pub per_id: usize,
    #[arg(long)]
    pub dim: usize,
    /// Expected norm of the per-sample noise around the unit identity mean.
    #[arg(long)]
    pub sigma: f64,
    #[arg(long, env = "MCL_SEED", default_value_t = 1)]
    pub seed: u64,
    #[arg(short, long)]
    pub out: PathBuf,
    /// Overwrite an existing output.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    Mcl,
    All,
    Naive,
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::Mcl => Regime::Mcl,
            RegimeArg::All => Regime::All,
            RegimeArg::Naive => Regime::NaiveSplit,
        }
    }
}

/// Options shared by the training commands. Flags override `--config`.
#[derive(Debug, Clone, Args)]
pub struct TrainingOptions {
    /// JSON training config; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run seed. Falls back to MCL_SEED, then to the config file.
    #[arg(long, env = "MCL_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub warmup_epochs: Option<usize>,
    /// Fraction of identities (highest-numbered) held out for evaluation.
    #[arg(long, default_value_t = 0.25)]
    pub holdout_fraction: f64,
    /// Evaluate on this pool instead of holding identities out.
    #[arg(long)]
    pub eval_pool: Option<PathBuf>,
    /// Reuse one split for every epoch.
    #[arg(long)]
    pub fixed_split: bool,
    /// Phase-2 identities ignore the subset they come from.
    #[arg(long)]
    pub shared_label_space: bool,
    /// Drop the siamese consistency term.
    #[arg(long)]
    pub no_sc: bool,
    /// Unweighted triplet hinge.
    #[arg(long)]
    pub plain_triplet: bool,
    /// Keep prototypes unnormalized after initialization and updates.
    #[arg(long)]
    pub no_proto_renorm: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// MCLF (or d=-headed CSV) feature file.
    pub pool: PathBuf,
    #[arg(long, value_enum, default_value_t = RegimeArg::Mcl)]
    pub regime: RegimeArg,
    /// Fraction of the pool clustered per epoch; N = round(1 / ratio).
    #[arg(long, default_value_t = 0.5)]
    pub split_ratio: f64,
    #[command(flatten)]
    pub training: TrainingOptions,
    /// Output directory.
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub pool: PathBuf,
    /// Split ratios; 1.0 contributes the All row.
    #[arg(long, value_delimiter = ',', default_value = "1.0,0.5,0.25")]
    pub ratios: Vec<f64>,
    #[command(flatten)]
    pub training: TrainingOptions,
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub pool: PathBuf,
    /// Checkpoint written by `train`.
    #[arg(long, required_unless_present = "untrained")]
    pub checkpoint: Option<PathBuf>,
    /// Evaluate the freshly initialized encoder of `--config`/`--seed` instead.
    #[arg(long, conflicts_with = "checkpoint")]
    pub untrained: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, env = "MCL_SEED")]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0.25)]
    pub holdout_fraction: f64,
    /// Evaluate over every identity of the pool.
    #[arg(long)]
    pub all_identities: bool,
    /// Write the JSON report here instead of stdout.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    pub pool: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}
