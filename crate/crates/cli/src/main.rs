//! `sitent`: train, evaluate and analyse clause-level situation entity
//! taggers from the command line.

mod commands;
mod options;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use options::{EmbedFlags, TrainFlags};

#[derive(Parser, Debug)]
#[command(name = "sitent", version, about = "Clause-level situation entity tagging with hierarchical Bi-LSTMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Label counts and percentages of a corpus
    Stats(StatsArgs),
    /// Write a seeded synthetic corpus
    Synth(SynthArgs),
    /// Write genre-balanced holdout or k-fold splits
    Split(SplitArgs),
    /// Train one model and write its checkpoint and history
    Train(TrainArgs),
    /// Score a checkpoint on a labeled corpus
    Eval(EvalArgs),
    /// Write one predicted label per clause
    Predict(PredictArgs),
    /// Repeated train/test runs with mean and standard deviation
    Holdout(HoldoutArgs),
    /// k-fold cross-validation with pooled metrics
    Cv(CvArgs),
    /// Leave-one-genre-out evaluation
    Crossgenre(CrossgenreArgs),
    /// Learning curve over nested training subsets
    Curve(CurveArgs),
    /// Connective-masking ablation
    Ablate(AblateArgs),
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Add one percentage column per genre
    #[arg(long)]
    by_genre: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TaskArg {
    Keyword,
    Context,
    Connective,
    LabelRuns,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "keyword")]
    task: TaskArg,
    #[arg(long, default_value_t = 200)]
    paragraphs: usize,
    #[arg(long, default_value_t = 2)]
    genres: usize,
    #[arg(long, default_value_t = 2)]
    min_clauses: usize,
    #[arg(long, default_value_t = 6)]
    max_clauses: usize,
    /// Labels used by the label-runs task
    #[arg(long, default_value_t = 3)]
    labels: usize,
    /// Probability that the next clause keeps the label (label-runs)
    #[arg(long, default_value_t = 0.9)]
    stay: f64,
    /// Probability that a clause's keyword names its label (label-runs)
    #[arg(long, default_value_t = 0.5)]
    cue_rate: f64,
    /// Uninformative clauses hold filler only instead of a random keyword
    #[arg(long)]
    blank: bool,
    #[arg(long, env = "SITENT_SEED", default_value_t = 0)]
    seed: u64,
    /// Corpus file to write
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct SplitArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Training share per genre for a holdout split
    #[arg(long, default_value_t = 0.8)]
    ratio: f64,
    /// Write k folds instead of one holdout split
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, env = "SITENT_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "sitent-out")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Development corpus for model selection by macro-F1
    #[arg(long)]
    dev: Option<PathBuf>,
    #[command(flatten)]
    flags: TrainFlags,
    #[arg(long, default_value = "sitent-out")]
    out_dir: PathBuf,
    /// Checkpoint path [default: <out-dir>/model.ckpt]
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    embed: EmbedFlags,
    #[arg(long, default_value = "sitent-out")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    embed: EmbedFlags,
    #[arg(long, default_value = "sitent-out")]
    out_dir: PathBuf,
}

/// Training data plus either an explicit test corpus or a holdout ratio.
#[derive(Args, Debug)]
struct SplitData {
    #[arg(long)]
    corpus: PathBuf,
    /// Test corpus; without it a per-genre holdout split of --corpus is used
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, default_value_t = 0.8)]
    ratio: f64,
}

#[derive(Args, Debug)]
struct HoldoutArgs {
    #[command(flatten)]
    data: SplitData,
    #[command(flatten)]
    flags: TrainFlags,
    #[arg(long, default_value = "sitent-out")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct CvArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[command(flatten)]
    flags: TrainFlags,
    #[arg(long, default_value = "sitent-out")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct CrossgenreArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    flags: TrainFlags,
    #[arg(long, default_value = "sitent-out")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct CurveArgs {
    #[command(flatten)]
    data: SplitData,
    /// Ascending training fractions in (0, 1]
    #[arg(long, default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
    fractions: String,
    #[command(flatten)]
    flags: TrainFlags,
    #[arg(long, default_value = "sitent-out")]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AblationArg {
    Retrain,
    EvalOnly,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[command(flatten)]
    data: SplitData,
    /// Connective lexicon, one phrase per line [default: bundled list]
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "retrain")]
    mode: AblationArg,
    #[command(flatten)]
    flags: TrainFlags,
    #[arg(long, default_value = "sitent-out")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Library errors already embed their source; skip repeated links.
            let mut msg = String::new();
            for cause in e.chain().map(|c| c.to_string()) {
                if !msg.contains(&cause) {
                    msg = if msg.is_empty() { cause } else { format!("{msg}: {cause}") };
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Stats(a) => commands::stats(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Split(a) => commands::split(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Holdout(a) => commands::holdout(&a),
        Command::Cv(a) => commands::cv(&a),
        Command::Crossgenre(a) => commands::crossgenre(&a),
        Command::Curve(a) => commands::curve(&a),
        Command::Ablate(a) => commands::ablate(&a),
    }
}
