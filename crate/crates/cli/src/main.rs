mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Latent population-graph learning: training, evaluation and synthetic
/// graph-recovery experiments.
#[derive(Debug, Parser)]
#[command(name = "latgraph", version)]
pub struct Cli {
    /// Worker threads for folds and curve cells (default: all cores).
    #[arg(long, global = true, env = "LATGRAPH_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on every labeled row and save the model.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Stratified k-fold evaluation; prints accuracy and AUC (percent,
    /// mean ± std over folds).
    CrossValidate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        out: OutArgs,
        /// Number of folds.
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, value_enum, default_value_t = MethodArg::Latent)]
        method: MethodArg,
        /// Neighbors per node for `--method knn`.
        #[arg(long, default_value_t = latgraph::training::DEFAULT_KNN_NEIGHBORS)]
        knn_k: usize,
        /// Ridge penalty for `--method linear`.
        #[arg(long, default_value_t = latgraph::training::RIDGE_LAMBDA)]
        lambda: f64,
    },
    /// Predict unseen rows with a saved model; the graph is rebuilt over the
    /// training rows plus the new rows.
    Infer {
        /// Model file written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// CSV with the model's feature columns; labels are not needed.
        #[arg(long)]
        data: PathBuf,
        /// Node id column of `--data`.
        #[arg(long)]
        id_col: Option<String>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Recover one random graph from neighbor-sum targets.
    SynthRecover {
        #[arg(long, default_value_t = 10)]
        nodes: usize,
        /// Embedding dimension.
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[command(flatten)]
        recovery: RecoveryArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Recovery error over grids of node counts and embedding dimensions.
    SynthCurves {
        /// Comma-separated node counts.
        #[arg(long, value_delimiter = ',', default_value = "5,10,20")]
        nodes: Vec<usize>,
        /// Comma-separated embedding dimensions.
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
        dims: Vec<usize>,
        /// Seeds 0..n are run for every cell.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[command(flatten)]
        recovery: RecoveryArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Write the learned adjacency of a saved model as a dense CSV.
    ExportGraph {
        #[arg(long)]
        model: PathBuf,
        /// Unseen rows to add to the training rows before building the graph.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Node id column of `--data`.
        #[arg(long)]
        id_col: Option<String>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Finite-difference check of every differentiable operation and of the
    /// end-to-end loss.
    Gradcheck {
        /// Random instances per check.
        #[arg(long, default_value_t = 10)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Label column.
    #[arg(long)]
    label_col: String,
    /// Node id column; rows are numbered when omitted.
    #[arg(long)]
    id_col: Option<String>,
    /// Comma-separated feature columns, or `rest` for every other column.
    #[arg(long, default_value = "rest")]
    features: String,
    /// Use raw feature values instead of standardized ones.
    #[arg(long)]
    no_standardize: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 600)]
    epochs: usize,
    /// Initial learning rate.
    #[arg(long, default_value_t = 0.01)]
    lr0: f64,
    /// Final learning rate.
    #[arg(long, default_value_t = 0.0001)]
    lr_min: f64,
    /// Epochs between learning-rate decays.
    #[arg(long, default_value_t = 100)]
    lr_step: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated hidden widths of the embedding MLP.
    #[arg(long, value_delimiter = ',', default_value = "64")]
    embed_hidden: Vec<usize>,
    /// Embedding dimension.
    #[arg(long, default_value_t = 16)]
    embed_dim: usize,
    /// Comma-separated output widths of the GC layers.
    #[arg(long, value_delimiter = ',', default_value = "16,8")]
    gc_widths: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct RecoveryArgs {
    /// Erdős–Rényi edge probability.
    #[arg(long, default_value_t = latgraph::synthetic::DEFAULT_EDGE_PROBABILITY)]
    edge_prob: f64,
    #[arg(long, default_value_t = 2000)]
    iterations: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Directory for every output file; created if missing.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    /// Learned graph, test rows in the graph during training.
    Latent,
    /// Learned graph, test rows added only at inference.
    Inductive,
    /// GCN on a fixed kNN graph of the input features.
    Knn,
    /// One-vs-rest ridge classifier.
    Linear,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
