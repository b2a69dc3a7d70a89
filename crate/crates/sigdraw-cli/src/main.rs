//! `sigdraw` — approximate path drawdown with truncated signatures and
//! train drawdown-aware path generators.
//!
//! Every subcommand resolves its settings from defaults, then an optional
//! `--config` file of flat `key = value` lines, then flags (flags win),
//! runs deterministically from the configured seed, and writes its
//! artifacts plus a `manifest.json` into `--out`.

mod commands;
mod config;
mod manifest;

use clap::{Args, Parser, Subcommand};
use sigdraw::drawdown::TargetKind;
use sigdraw::Error;

#[derive(Parser)]
#[command(name = "sigdraw", version, about = "Signature-based drawdown approximation and drawdown-aware path generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulation study: approximation error across roughness (Hurst
    /// index), signature level and training-set size
    FbmStudy(FbmStudyArgs),
    /// Fit a drawdown approximator on blocks of a portfolio price series
    Fit(FitArgs),
    /// Train the drawdown-aware generator on blocks of a portfolio series
    Train(TrainArgs),
    /// Sample synthetic blocks from a trained generator
    Generate(GenerateArgs),
    /// Compare generated samples against held-out data drawdowns
    Report(ReportArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Flat `key = value` config file; flags override its entries
    #[arg(long)]
    config: Option<std::path::PathBuf>,
    /// Output directory (created if missing)
    #[arg(long)]
    out: Option<String>,
    /// Seed for all randomness in this run
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FbmStudyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Hurst indices, comma-separated (e.g. 0.4,0.55,0.7)
    #[arg(long)]
    h: Option<String>,
    /// Signature truncation levels: inclusive range `1..6` or a comma list
    #[arg(long)]
    m: Option<String>,
    /// Training-set sizes, comma-separated
    #[arg(long)]
    k: Option<String>,
    /// Window length in points
    #[arg(long)]
    tau: Option<usize>,
    /// Extra test paths as a fraction of k
    #[arg(long = "p-test")]
    p_test: Option<f64>,
    /// Per-step drift of the simulated paths
    #[arg(long)]
    mu: Option<f64>,
    /// Per-step volatility of the Brownian benchmark; each Hurst index is
    /// rescaled to the same full-window variance
    #[arg(long)]
    sigma: Option<f64>,
    /// Drawdown summary to predict: terminal, maximum or integrated
    #[arg(long)]
    target: Option<TargetKind>,
    /// Cross-validation folds
    #[arg(long)]
    folds: Option<usize>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Price table CSV (date column plus one positive price column per asset)
    #[arg(long)]
    data: Option<String>,
    /// Portfolio weights, comma-separated, or `equal`
    #[arg(long)]
    weights: Option<String>,
    /// Pool blocks from this many random simplex portfolios instead of one
    /// fixed-weight portfolio
    #[arg(long)]
    portfolios: Option<usize>,
    /// Window length in points
    #[arg(long)]
    tau: Option<usize>,
    /// Signature truncation level
    #[arg(long)]
    level: Option<usize>,
    /// Drawdown summary to predict: terminal, maximum or integrated
    #[arg(long)]
    target: Option<TargetKind>,
    /// Divide each block by its first value
    #[arg(long)]
    rebase: Option<bool>,
    /// Cross-validation folds
    #[arg(long)]
    folds: Option<usize>,
    /// Contiguous (temporal) CV folds instead of shuffled ones
    #[arg(long)]
    temporal: Option<bool>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Price table CSV
    #[arg(long)]
    data: Option<String>,
    /// Portfolio weights, comma-separated, or `equal`
    #[arg(long)]
    weights: Option<String>,
    /// Block length in points (generator input size)
    #[arg(long)]
    tau: Option<usize>,
    /// Signature level for the companion drawdown predictor
    #[arg(long)]
    level: Option<usize>,
    /// Drawdown summary the predictor is fitted to
    #[arg(long)]
    target: Option<TargetKind>,
    /// Divide each block by its first value
    #[arg(long)]
    rebase: Option<bool>,
    /// Weight of the drawdown-matching loss term (0 trains a plain
    /// autoencoder)
    #[arg(long)]
    alpha: Option<f64>,
    /// Optional weight on the latent divergence term
    #[arg(long)]
    beta: Option<f64>,
    /// Mini-batch size
    #[arg(long)]
    batch: Option<usize>,
    /// Maximum optimization steps
    #[arg(long)]
    steps: Option<usize>,
    /// Early-stop patience in steps
    #[arg(long)]
    patience: Option<usize>,
    /// Learning rate
    #[arg(long)]
    lr: Option<f64>,
    /// Hidden-unit dropout probability
    #[arg(long)]
    dropout: Option<f64>,
    /// Hidden layer width
    #[arg(long)]
    hidden: Option<usize>,
    /// Latent dimension
    #[arg(long)]
    latent: Option<usize>,
    /// Fraction of blocks (from the end) held out for validation
    #[arg(long = "val-fraction")]
    val_fraction: Option<f64>,
    /// Cross-validation folds for the companion predictor fit
    #[arg(long)]
    folds: Option<usize>,
    /// Reuse a fitted drawdown predictor instead of fitting one
    #[arg(long = "drawdown-model")]
    drawdown_model: Option<String>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Trained generator model file
    #[arg(long)]
    model: Option<String>,
    /// Number of paths to sample
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Price table CSV providing the empirical reference
    #[arg(long)]
    data: Option<String>,
    /// Portfolio weights, comma-separated, or `equal`
    #[arg(long)]
    weights: Option<String>,
    /// Block length in points; must match the sample files
    #[arg(long)]
    tau: Option<usize>,
    /// Drawdown summary to compare
    #[arg(long)]
    target: Option<TargetKind>,
    /// Divide each block by its first value
    #[arg(long)]
    rebase: Option<bool>,
    /// Fraction of blocks (from the end) used as the held-out reference;
    /// 0 compares against all blocks
    #[arg(long = "val-fraction")]
    val_fraction: Option<f64>,
    /// Generated-sample CSV files (one or two; comma-separated in config)
    #[arg(long)]
    samples: Vec<String>,
    /// Paths in the Brownian baseline sample
    #[arg(long = "baseline-paths")]
    baseline_paths: Option<usize>,
    /// Histogram bin count
    #[arg(long)]
    bins: Option<usize>,
    /// Interior quantile-quantile levels
    #[arg(long)]
    qq: Option<usize>,
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Invalid(_) => 2,
        Error::Data { .. } | Error::Io(_) | Error::Model(_) => 3,
        Error::Numeric(_) => 4,
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::FbmStudy(args) => commands::fbm_study::run(args),
        Command::Fit(args) => commands::fit::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Generate(args) => commands::generate::run(args),
        Command::Report(args) => commands::report::run(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
