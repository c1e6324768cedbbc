//! `adaptagent` command-line entry point.
//!
//! Every subcommand writes its artifacts under `--out` and records a
//! provenance block (command line, configuration, seeds, corpus digest).
//! Failures print `{"error": kind, "message": ...}` on stderr and exit with
//! 2 (usage), 3 (validation) or 4 (runtime).

mod client;
mod commands;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use adaptagent::evalkit::{Arm, SplitName, DEFAULT_CROSS_TASK_PER_SITE, DEFAULT_HELD_OUT_DOMAINS, DEFAULT_HELD_OUT_SITES};
use adaptagent::metatrain::{FinetuneMode, Strategy};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "adaptagent", version, about = "Few-shot web agent adaptation lab")]
pub struct Cli {
    /// Worker threads for evaluation and training loops (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus and its default split.
    GenCorpus(GenCorpusArgs),
    /// Rebalance train and cross-task sets by instruction similarity.
    Dedup(DedupArgs),
    /// Meta-train a policy with first-order MAML.
    MetaTrain(MetaTrainArgs),
    /// Fine-tune a policy with plain SGD.
    Finetune(FinetuneArgs),
    /// Adapt a checkpoint to a target website or domain.
    Adapt(AdaptArgs),
    /// Evaluate one arm on one split.
    Eval(EvalArgs),
    /// Evaluate in-context prompting with a client.
    IclEval(IclEvalArgs),
    /// Serve the demonstration recorder.
    Serve(ServeArgs),
    /// Run one of the packaged experiments on the default corpus.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub domains: usize,
    #[arg(long, default_value_t = 15)]
    pub sites_per_domain: usize,
    #[arg(long, default_value_t = 8)]
    pub tasks_per_site: usize,
    /// Add collapsed duplicates of navigation and button groups.
    #[arg(long)]
    pub hidden_duplicates: bool,
    /// Percentage chance that a site follows its domain's house style.
    #[arg(long, default_value_t = adaptagent::experiments::DEFAULT_PROFILE.house_style_percent)]
    pub house_style: u8,
    #[arg(long, default_value_t = DEFAULT_HELD_OUT_SITES)]
    pub held_out_sites: usize,
    #[arg(long, default_value_t = DEFAULT_HELD_OUT_DOMAINS)]
    pub held_out_domains: usize,
    #[arg(long, default_value_t = DEFAULT_CROSS_TASK_PER_SITE)]
    pub cross_task_per_site: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DedupArgs {
    /// JSON array of training tasks.
    #[arg(long)]
    pub train: PathBuf,
    /// JSON array of cross-task tasks.
    #[arg(long)]
    pub cross_task: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Corpus file plus an optional split file (defaults to `split.json` next
/// to the corpus, or the standard split when absent).
#[derive(Debug, Args, Clone)]
pub struct CorpusArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub split_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetaTrainArgs {
    #[command(flatten)]
    pub data: CorpusArgs,
    #[arg(long, default_value = "hybrid")]
    pub strategy: Strategy,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.2)]
    pub beta: f64,
    #[arg(long, default_value_t = 3)]
    pub inner_steps: usize,
    #[arg(long, default_value_t = 80)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = adaptagent::policy::DEFAULT_HIDDEN)]
    pub hidden: usize,
    #[arg(long, value_enum, default_value_t = ModalityArg::Multimodal)]
    pub modality: ModalityArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub data: CorpusArgs,
    #[arg(long, default_value = "full")]
    pub mode: FinetuneMode,
    /// Task selection whose multiset the `de` mode consumes.
    #[arg(long, default_value = "hybrid")]
    pub strategy: Strategy,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 80)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = adaptagent::policy::DEFAULT_HIDDEN)]
    pub hidden: usize,
    #[arg(long, value_enum, default_value_t = ModalityArg::Multimodal)]
    pub modality: ModalityArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AdaptArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Recorded demonstration files.
    #[arg(long, num_args = 1.., conflicts_with = "oracle")]
    pub demos: Vec<PathBuf>,
    /// Use oracle demonstrations for these task ids.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub oracle: Vec<String>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 3)]
    pub inner_steps: usize,
    #[arg(long, value_enum, default_value_t = ModalityArg::Multimodal)]
    pub modality: ModalityArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: CorpusArgs,
    #[arg(long)]
    pub arm: Arm,
    #[arg(long = "split", default_value = "cross-website")]
    pub which: SplitName,
    #[arg(long, value_enum, default_value_t = ModeArg::Trajectory)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Policy parameters, for policy arms.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub agent: ClientArgs,
    #[arg(long, default_value_t = 2)]
    pub n_adapt_tasks: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 3)]
    pub inner_steps: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct ClientArgs {
    #[arg(long, value_enum, default_value_t = ClientKind::Simulated)]
    pub client: ClientKind,
    /// Script file for the mock client (JSON lines).
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Replay the script from the start when it runs out.
    #[arg(long)]
    pub cyclic: bool,
    /// Endpoint for the http client.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub n_demos: usize,
    #[arg(long, value_enum, default_value_t = ModalityArg::Multimodal)]
    pub modality: ModalityArg,
}

#[derive(Debug, Args)]
pub struct IclEvalArgs {
    #[command(flatten)]
    pub data: CorpusArgs,
    #[arg(long = "split", default_value = "cross-website")]
    pub which: SplitName,
    #[arg(long, value_enum, default_value_t = ModeArg::Trajectory)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub agent: ClientArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 8787)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    /// Directory for finished demonstrations.
    #[arg(long, default_value = "demos")]
    pub demos_dir: PathBuf,
    /// Idle minutes before a session expires.
    #[arg(long, default_value_t = 30)]
    pub ttl_minutes: u64,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(value_enum)]
    pub name: ExperimentName,
    /// Seed of the training schedule.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentName {
    /// Adapted meta-learned policy against the data-equivalent baseline.
    Gain,
    /// Task-selection strategies on the transfer splits.
    Strategies,
    /// Multimodal against text-only demonstrations.
    Modality,
    /// Step SR as the number of in-context demonstrations grows.
    Trend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModalityArg {
    Multimodal,
    Text,
}

impl From<ModalityArg> for adaptagent::observation::Modality {
    fn from(m: ModalityArg) -> Self {
        match m {
            ModalityArg::Multimodal => adaptagent::observation::Modality::Multimodal,
            ModalityArg::Text => adaptagent::observation::Modality::TextOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Trajectory,
    Live,
}

impl From<ModeArg> for adaptagent::evalkit::EvalMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Trajectory => adaptagent::evalkit::EvalMode::Trajectory,
            ModeArg::Live => adaptagent::evalkit::EvalMode::Live,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClientKind {
    /// Replays a script file.
    Mock,
    /// Deterministic prompt reader.
    Simulated,
    /// Posts prompts to `--endpoint`.
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Validation,
    Runtime,
}

impl ErrorKind {
    fn exit_code(self) -> u8 {
        match self {
            ErrorKind::Usage => 2,
            ErrorKind::Validation => 3,
            ErrorKind::Runtime => 4,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Usage => "usage",
            ErrorKind::Validation => "validation",
            ErrorKind::Runtime => "runtime",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl fmt::Display) -> Self {
        CliError {
            kind: ErrorKind::Usage,
            message: message.to_string(),
        }
    }

    pub fn validation(message: impl fmt::Display) -> Self {
        CliError {
            kind: ErrorKind::Validation,
            message: message.to_string(),
        }
    }

    pub fn runtime(message: impl fmt::Display) -> Self {
        CliError {
            kind: ErrorKind::Runtime,
            message: message.to_string(),
        }
    }
}

fn fail(error: &CliError) -> ExitCode {
    let body = serde_json::json!({ "error": error.kind.as_str(), "message": error.message });
    eprintln!("{body}");
    ExitCode::from(error.kind.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&CliError::usage(e.to_string().trim_end())),
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return fail(&CliError::usage("--jobs must be at least 1"));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            return fail(&CliError::runtime(e));
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
