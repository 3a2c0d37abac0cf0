//! Command-line pipeline around the `flowshap` library: prepare a flow
//! CSV, train a boosted classifier, export SHAP attributions, select a
//! minimal feature set and score new traffic.
//!
//! Commands compose through files only. Every invocation writes a
//! `manifest-<command>.json` recording inputs (with digests), the fully
//! resolved configuration and the output file list, so any artifact can
//! be reproduced byte for byte from its manifest.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use flowshap::selection::SelectionMethod;
use flowshap::ExplainScope;

#[derive(Parser)]
#[command(
    name = "flowshap",
    version,
    about = "Boosted flow classifier with SHAP-driven feature selection"
)]
struct Cli {
    /// Seed for every randomized step (splits, synthetic data).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Directory where artifacts and manifests are written.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Worker threads for parallel sections (0 = one per core).
    #[arg(long, global = true, env = "FLOWSHAP_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a flow CSV, preprocess it and write a seeded train/test split.
    Prepare(PrepareArgs),
    /// Train a boosted model on a prepared split and evaluate it.
    Train(TrainArgs),
    /// Export per-row SHAP attributions and the mean-|SHAP| ranking.
    Explain(ExplainArgs),
    /// Select features with the SHAP wrapper or a filter baseline.
    Select(SelectArgs),
    /// Score a raw CSV with a trained model.
    Detect(DetectArgs),
    /// Generate a synthetic flow CSV with planted informative features.
    Synth(SynthArgs),
    /// Run prepare, train, explain and select in one invocation.
    RunAll(RunAllArgs),
}

#[derive(Args)]
struct PrepareArgs {
    /// Input flow CSV.
    csv: PathBuf,

    /// Name of the label column (matched ignoring case and spaces).
    #[arg(long, default_value = "Label")]
    label_col: String,

    /// Label value treated as the normal class (repeatable; defaults to
    /// the usual benign spellings).
    #[arg(long = "normal-label")]
    normal_labels: Vec<String>,

    /// Label value treated as the positive class (repeatable; defaults
    /// to the initial-compromise spellings).
    #[arg(long = "positive-label")]
    positive_labels: Vec<String>,

    /// Identifier columns to drop, comma separated (defaults to the
    /// flow-meter identifier set).
    #[arg(long, value_delimiter = ',')]
    drop_cols: Option<Vec<String>>,

    /// Fraction of each class kept for training.
    #[arg(long, default_value_t = 0.8)]
    train_frac: f64,

    /// Split without preserving per-class proportions.
    #[arg(long)]
    no_stratify: bool,

    /// Fail when a requested drop column is absent instead of warning.
    #[arg(long)]
    strict_drop_cols: bool,
}

#[derive(Args, Clone)]
struct GbtFlags {
    /// Shrinkage applied to each leaf value.
    #[arg(long, default_value_t = 0.3)]
    learning_rate: f64,

    /// Maximum tree depth.
    #[arg(long, default_value_t = 6)]
    max_depth: usize,

    /// Boosting rounds (one tree per round).
    #[arg(long, default_value_t = 100)]
    rounds: usize,

    /// L2 penalty on leaf values.
    #[arg(long, default_value_t = 1.0)]
    l2: f64,

    /// Minimum hessian sum on each side of a split.
    #[arg(long, default_value_t = 1.0)]
    min_child_hessian: f64,

    /// Class-1 probability the constant base margin encodes.
    #[arg(long, default_value_t = 0.5)]
    base_probability: f64,
}

impl GbtFlags {
    fn to_config(&self, seed: u64) -> flowshap::GbtConfig {
        flowshap::GbtConfig {
            learning_rate: self.learning_rate,
            max_depth: self.max_depth,
            num_rounds: self.rounds,
            l2_leaf_penalty: self.l2,
            min_child_hessian: self.min_child_hessian,
            base_probability: self.base_probability,
            seed,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Prepared split directory (defaults to --out-dir).
    #[arg(long)]
    data: Option<PathBuf>,

    #[command(flatten)]
    gbt: GbtFlags,

    /// Decision threshold for evaluation labels.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Scope {
    /// Training rows only (no test leakage into the ranking).
    Train,
    /// Train and test rows together.
    All,
}

impl Scope {
    fn to_explain_scope(self) -> ExplainScope {
        match self {
            Scope::Train => ExplainScope::Train,
            Scope::All => ExplainScope::All,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Scope::Train => "train",
            Scope::All => "all",
        }
    }
}

#[derive(Args)]
struct ExplainArgs {
    /// Trained model file (defaults to <out-dir>/model.json).
    #[arg(long)]
    model: Option<PathBuf>,

    /// Prepared split directory (defaults to --out-dir).
    #[arg(long)]
    data: Option<PathBuf>,

    /// Rows to explain.
    #[arg(long, value_enum, default_value_t = Scope::Train)]
    on: Scope,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    ShapWrapper,
    Chi2,
    AnovaF,
    MutualInfo,
    Pearson,
    Embedded,
    /// Every method above, one report row each.
    All,
}

impl MethodArg {
    /// `None` means "run every method".
    fn to_method(self) -> Option<SelectionMethod> {
        match self {
            MethodArg::ShapWrapper => Some(SelectionMethod::ShapWrapper),
            MethodArg::Chi2 => Some(SelectionMethod::Chi2),
            MethodArg::AnovaF => Some(SelectionMethod::AnovaF),
            MethodArg::MutualInfo => Some(SelectionMethod::MutualInfo),
            MethodArg::Pearson => Some(SelectionMethod::Pearson),
            MethodArg::Embedded => Some(SelectionMethod::Embedded),
            MethodArg::All => None,
        }
    }
}

#[derive(Args, Clone)]
struct SelectKnobs {
    /// Selection method (default: shap-wrapper for `select`, all for
    /// `run-all`).
    #[arg(long, value_enum)]
    method: Option<MethodArg>,

    /// F1 slack tolerated when the wrapper stops.
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,

    /// Features kept by the filter baselines.
    #[arg(long, default_value_t = 4)]
    k: usize,

    /// Quantile bins used by mutual information.
    #[arg(long, default_value_t = 10)]
    mi_bins: usize,

    /// Rows the wrapper's SHAP ranking is computed on.
    #[arg(long, value_enum, default_value_t = Scope::Train)]
    on: Scope,
}

#[derive(Args)]
struct SelectArgs {
    /// Prepared split directory (defaults to --out-dir).
    #[arg(long)]
    data: Option<PathBuf>,

    #[command(flatten)]
    knobs: SelectKnobs,

    #[command(flatten)]
    gbt: GbtFlags,
}

#[derive(Args)]
struct DetectArgs {
    /// CSV of rows to score; must contain every model feature column.
    csv: PathBuf,

    /// Trained model file (defaults to <out-dir>/model.json).
    #[arg(long)]
    model: Option<PathBuf>,

    /// Probability threshold for flagging a row positive.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Args)]
struct SynthArgs {
    /// Total feature columns.
    #[arg(long, default_value_t = 77)]
    features: usize,

    /// Planted features as index:shift pairs (shift in units of sigma),
    /// e.g. `--informative 12:8,30:8`.
    #[arg(long, value_delimiter = ',')]
    informative: Vec<String>,

    /// Normal (class 0) rows.
    #[arg(long, default_value_t = 10_000)]
    normal: usize,

    /// Positive (class 1) rows.
    #[arg(long, default_value_t = 150)]
    positive: usize,

    /// Noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,

    /// Use the 77 flow-meter column names (requires --features 77).
    #[arg(long)]
    cic_names: bool,

    /// Shift each positive row on a single planted feature, dealt
    /// round-robin, so every planted feature is individually necessary.
    #[arg(long)]
    partition_positives: bool,

    /// Skip the dummy identifier columns.
    #[arg(long)]
    no_identifiers: bool,

    /// Output CSV (defaults to <out-dir>/synth.csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunAllArgs {
    #[command(flatten)]
    prepare: PrepareArgs,

    #[command(flatten)]
    gbt: GbtFlags,

    #[command(flatten)]
    knobs: SelectKnobs,

    /// Decision threshold for evaluation labels.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

fn configure_threads(threads: usize) {
    #[cfg(feature = "parallel")]
    if threads > 0 {
        if let Err(err) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("warning: could not size the thread pool: {err}");
        }
    }
    #[cfg(not(feature = "parallel"))]
    if threads > 1 {
        eprintln!("warning: built without the `parallel` feature; --threads has no effect");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads(cli.threads);
    let ctx = commands::Ctx { seed: cli.seed, out_dir: cli.out_dir, threads: cli.threads };
    let result = match cli.command {
        Command::Prepare(args) => commands::cmd_prepare(&ctx, &args),
        Command::Train(args) => commands::cmd_train(&ctx, &args),
        Command::Explain(args) => commands::cmd_explain(&ctx, &args),
        Command::Select(args) => commands::cmd_select(&ctx, &args),
        Command::Detect(args) => commands::cmd_detect(&ctx, &args),
        Command::Synth(args) => commands::cmd_synth(&ctx, &args),
        Command::RunAll(args) => commands::cmd_run_all(&ctx, &args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
