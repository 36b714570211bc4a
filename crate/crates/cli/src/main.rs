use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use speechrag::ragpipe::PipelineMode;

mod commands;
mod config;
mod report;

/// Speech-native retrieval experiments on a synthetic spoken corpus.
#[derive(Debug, Parser)]
#[command(name = "speechrag", version)]
struct Cli {
    /// JSON run config (a `.meta.json` record from an earlier run also works).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render the synthetic corpus to WAV files plus a JSONL manifest.
    Synth,
    /// Partition passages into train/val/test.
    Split,
    /// Train the speech encoder and adapter against the frozen text branch.
    Train,
    /// Write passage embeddings for one mode.
    Embed(EmbedArgs),
    /// Build an index from embeddings written by `embed`.
    Index(EmbedArgs),
    /// Query a saved index.
    Search(SearchArgs),
    /// Recall@k table, one row per mode.
    EvalRetrieval(EvalRetrievalArgs),
    /// Recall@k against SNR for speech and fully cascaded retrieval.
    NoiseSweep(NoiseSweepArgs),
    /// Corrupt transcripts to target word error rates.
    Corrupt(CorruptArgs),
    /// Run generation end to end and score the answers.
    EvalGeneration(EvalGenerationArgs),
    /// Compare analytic gradients with central differences on a fresh model.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ModeArg {
    #[value(name = "speech", alias = "speech_rag")]
    Speech,
    #[value(name = "semi_cascaded", alias = "semi")]
    SemiCascaded,
    #[value(name = "cascaded", alias = "fully_cascaded")]
    Cascaded,
    #[value(name = "gt_text")]
    GtText,
}

impl From<ModeArg> for PipelineMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Speech => PipelineMode::SpeechRag,
            ModeArg::SemiCascaded => PipelineMode::SemiCascaded,
            ModeArg::Cascaded => PipelineMode::FullyCascaded,
            ModeArg::GtText => PipelineMode::GtText,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Args, Serialize)]
struct EmbedArgs {
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Transcript WER for the cascaded mode; defaults to the first configured target.
    #[arg(long)]
    target_wer: Option<f64>,
    /// Add noise at this SNR (dB) before speech embedding.
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct SearchArgs {
    #[command(flatten)]
    index: EmbedArgs,
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Query text.
    query: String,
}

#[derive(Debug, Args, Serialize)]
struct EvalRetrievalArgs {
    #[arg(long, value_enum, value_delimiter = ',', default_value = "speech,cascaded,gt_text")]
    mode: Vec<ModeArg>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    target_wer: Option<Vec<f64>>,
}

#[derive(Debug, Args, Serialize)]
struct NoiseSweepArgs {
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
}

#[derive(Debug, Args, Serialize)]
struct CorruptArgs {
    #[arg(long, value_delimiter = ',')]
    target_wer: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "all")]
    split: SplitArg,
}

#[derive(Debug, Args, Serialize)]
struct EvalGenerationArgs {
    #[arg(long, value_enum, value_delimiter = ',', default_value = "speech,semi_cascaded,cascaded,gt_text")]
    mode: Vec<ModeArg>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    #[arg(long, value_delimiter = ',')]
    target_wer: Option<Vec<f64>>,
    #[arg(long)]
    top_k_context: Option<usize>,
    #[arg(long)]
    generator_url: Option<String>,
}

#[derive(Debug, Args, Serialize)]
struct GradcheckArgs {
    /// Scalars probed per tensor.
    #[arg(long, default_value_t = 16)]
    probes: usize,
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    threshold: f64,
    /// Synthetic passages in the check batch.
    #[arg(long, default_value_t = 4)]
    passages: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
