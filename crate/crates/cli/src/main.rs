mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use monet::train::Variant;

/// Metadata-orthogonal node embeddings: walks, co-occurrences, training and
/// the bias experiments.
#[derive(Debug, Parser)]
#[command(name = "monet", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate uniform random walks from an edge list.
    Walks(WalksArgs),
    /// Count window-weighted co-occurrences in a walk corpus.
    Cooc(CoocArgs),
    /// Train embeddings on a co-occurrence store.
    Train(TrainArgs),
    /// Write the embeddings held in a checkpoint as TSV.
    Export(ExportArgs),
    /// Run one of the bias experiments end to end.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
    /// Write the synthetic two-party blog network: edges.tsv, labels.tsv and
    /// one-hot metadata.tsv.
    SynthBlogs(SynthArgs),
}

#[derive(Debug, Args)]
pub struct WalksArgs {
    /// Whitespace-separated edge list.
    #[arg(long)]
    pub graph: PathBuf,
    /// Read the edge list as user-item pairs in separate id spaces.
    #[arg(long)]
    pub bipartite: bool,
    #[arg(long, default_value_t = 80)]
    pub walks_per_node: usize,
    #[arg(long, default_value_t = 40)]
    pub walk_length: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CoocArgs {
    /// Walk corpus written by `walks`.
    #[arg(long)]
    pub walks: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub window: usize,
    /// Keep only nodes with id at least this value, renumbered from 0.
    #[arg(long)]
    pub keep_from: Option<u32>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Training flags. Unset flags fall back to `--config`, then to defaults.
#[derive(Debug, Args, Default)]
pub struct TrainFlags {
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub dims: Option<usize>,
    #[arg(long)]
    pub meta_dims: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Co-occurrence store written by `cooc`.
    #[arg(long)]
    pub cooc: PathBuf,
    /// Per-node metadata rows; required by glove_meta and monet.
    #[arg(long)]
    pub metadata: Option<PathBuf>,
    /// TOML training configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub flags: TrainFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum ExperimentCommand {
    /// Affiliation leakage and probes on the political blogs network.
    Blogs(BlogArgs),
    /// Shilling attack defence on MovieLens 100k.
    Shilling(ShillingArgs),
}

#[derive(Debug, Args)]
pub struct BlogArgs {
    /// Edge list of the blog network.
    #[arg(long, requires = "metadata", conflicts_with = "synthetic")]
    pub graph: Option<PathBuf>,
    /// Per-node affiliation (one 0/1 column or one-hot rows).
    #[arg(long, requires = "graph")]
    pub metadata: Option<PathBuf>,
    /// Use the synthetic two-party network instead of files.
    #[arg(long)]
    pub synthetic: bool,
    /// Seed of the synthetic network.
    #[arg(long, default_value_t = 0)]
    pub synthetic_seed: u64,
    /// TOML experiment configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long)]
    pub walks_per_node: Option<usize>,
    #[command(flatten)]
    pub flags: TrainFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ShillingArgs {
    /// MovieLens `u.data` ratings file.
    #[arg(long, default_value = "data/ml-100k/u.data")]
    pub graph: PathBuf,
    /// TOML experiment configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long)]
    pub walks_per_node: Option<usize>,
    #[command(flatten)]
    pub flags: TrainFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("MONET_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        monet::Error::Config(format!("MONET_THREADS={raw:?} is not a positive integer"))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("configuring the worker pool")
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Walks(a) => commands::walks(a),
        Command::Cooc(a) => commands::cooc(a),
        Command::Train(a) => commands::train(a),
        Command::Export(a) => commands::export(a),
        Command::Experiment(ExperimentCommand::Blogs(a)) => commands::blogs(a),
        Command::Experiment(ExperimentCommand::Shilling(a)) => commands::shilling(a),
        Command::SynthBlogs(a) => commands::synth_blogs(a),
    }
}

/// 2 for invalid configuration, 3 for missing input, 4 for numerical
/// failure, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<monet::Error>() {
            return match e {
                monet::Error::Config(_) => 2,
                monet::Error::MissingData(_) => 3,
                monet::Error::Io { source, .. }
                    if source.kind() == std::io::ErrorKind::NotFound =>
                {
                    3
                }
                monet::Error::Numerical(_) | monet::Error::Undefined(_) => 4,
                _ => 1,
            };
        }
        if let Some(e) = cause.downcast_ref::<std::io::Error>() {
            if e.kind() == std::io::ErrorKind::NotFound {
                return 3;
            }
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
