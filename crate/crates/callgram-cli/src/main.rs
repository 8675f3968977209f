//! `callgram` — the pipeline as composable subcommands.
//!
//! Exit codes: 0 on success, 1 on domain errors (one diagnostic line on
//! stderr), 2 on usage errors. Progress goes to stderr; data goes to
//! files or stdout, so commands are safe to pipe.

mod ops;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "callgram", version, about = "API-call n-gram malware detection pipeline")]
struct Cli {
    /// Cap worker pools; defaults to available parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter a manifest and produce a stratified train/test split.
    Ingest(IngestArgs),
    /// Generate a synthetic corpus in the canonical on-disk layout.
    Synth(SynthArgs),
    /// Build an n-gram vocabulary file.
    Vocab(VocabArgs),
    /// Featurize traces into a binary matrix cache.
    Featurize(FeaturizeArgs),
    /// Train a random forest on a matrix cache.
    Train(TrainArgs),
    /// Evaluate a model on a matrix cache: metrics plus curve data.
    Eval(EvalArgs),
    /// Run the full (variant, length, seed) grid and emit reports.
    Sweep(SweepArgs),
    /// Re-emit reports from a saved sweep result.
    Report(ReportArgs),
}

#[derive(Args)]
struct CorpusArgs {
    /// Directory of <sha256>.json trace files.
    #[arg(long)]
    traces: PathBuf,
    /// Manifest CSV (header `sample_id,labels`, pipe-separated labels).
    #[arg(long)]
    manifest: PathBuf,
    /// Fail on manifest entries whose trace file is missing.
    #[arg(long)]
    strict: bool,
    /// Dotted key path to the call array inside trace files.
    #[arg(long)]
    calls_path: Option<String>,
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, default_value_t = 0.75)]
    train_fraction: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Where to write the split artifact JSON.
    #[arg(long)]
    split_out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory (receives traces/ and manifest.csv).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0.03)]
    benign_fraction: f64,
    #[arg(long, default_value_t = 59)]
    alphabet: usize,
    #[arg(long, default_value_t = 200)]
    min_length: usize,
    #[arg(long, default_value_t = 3000)]
    max_length: usize,
    #[arg(long, default_value_t = 0.5)]
    divergence: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct VocabArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// N-gram order.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    n: u8,
    /// Build from the split's training ids (requires --split) or the
    /// whole corpus.
    #[arg(long, default_value = "train")]
    scope: ops::ScopeArg,
    /// Split artifact from `ingest`.
    #[arg(long)]
    split: Option<PathBuf>,
    /// Truncate traces to this many calls while collecting grams.
    #[arg(long)]
    truncate: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FeaturizeArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// unigram | bigram | trigram | combined
    #[arg(long)]
    variant: String,
    /// Call-length truncation threshold.
    #[arg(long)]
    length: usize,
    /// Vocabulary file for single-order variants.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Unigram/bigram/trigram vocabularies for the combined variant.
    #[arg(long)]
    uni: Option<PathBuf>,
    #[arg(long)]
    bi: Option<PathBuf>,
    #[arg(long)]
    tri: Option<PathBuf>,
    /// Featurize only this side of a split.
    #[arg(long)]
    split: Option<PathBuf>,
    /// train | test | all
    #[arg(long, default_value = "all")]
    role: ops::RoleArg,
    /// Output matrix cache path.
    #[arg(long)]
    out: PathBuf,
    /// Optional debug CSV export.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Matrix cache from `featurize`.
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    /// 0 means unlimited.
    #[arg(long, default_value_t = 0)]
    max_depth: u32,
    #[arg(long, default_value_t = 2)]
    min_samples_split: usize,
    /// sqrt | all | an integer count
    #[arg(long, default_value = "sqrt")]
    features: String,
    #[arg(long)]
    no_bootstrap: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    matrix: PathBuf,
    /// Decision threshold on P(benign).
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Directory for metrics.json and ROC/PR curve CSVs.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment config (TOML); defaults to $CALLGRAM_CONFIG.
    #[arg(long, env = "CALLGRAM_CONFIG")]
    config: PathBuf,
    /// Override the output directory from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seed list override.
    #[arg(long)]
    seeds: Option<String>,
    /// Comma-separated length list override.
    #[arg(long)]
    lengths: Option<String>,
    /// Comma-separated variant list override.
    #[arg(long)]
    variants: Option<String>,
    /// Override the per-cell forest size.
    #[arg(long)]
    trees: Option<usize>,
    /// Disable the cell cache.
    #[arg(long)]
    no_cache: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// A sweep_result.json produced by `sweep`.
    #[arg(long)]
    from: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(error) => {
            let code = match error.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = error.print();
            return ExitCode::from(code);
        }
    };

    if let Some(threads) = cli.threads {
        if let Err(error) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot configure {threads} worker threads: {error}");
            return ExitCode::from(1);
        }
    }

    let outcome = match cli.command {
        Command::Ingest(args) => ops::ingest(args),
        Command::Synth(args) => ops::synth(args),
        Command::Vocab(args) => ops::vocab(args),
        Command::Featurize(args) => ops::featurize(args),
        Command::Train(args) => ops::train(args),
        Command::Eval(args) => ops::eval(args),
        Command::Sweep(args) => ops::sweep(args),
        Command::Report(args) => ops::report(args),
    };

    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(1)
        }
    }
}
