//! `compex`: prepare data, train, extract, evaluate, ablate, augment, and
//! synthesize comparative relation corpora.

mod commands;
mod config;
mod tsv;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Bad usage or input; exits with code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "compex", version, about = "Comparative relation extraction")]
struct Cli {
    /// More log output; repeat for debug logs.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

/// Run configuration shared by train and ablate.
#[derive(Args, Clone, Debug, Default)]
pub struct RunArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// JSONL dataset to split.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// mini, crf, or adapter:<program>.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    prompt: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    /// Global seed; overrides the config file, which overrides COMPEX_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Any config key, as key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate and convert a corpus to JSONL and print its statistics.
    Prepare {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// jsonl or tsv; guessed from the input extension when omitted.
        #[arg(long)]
        format: Option<String>,
        /// Also write the statistics as JSON.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Split the dataset, train a backend, and write the checkpoint.
    Train(RunArgs),
    /// Predict relations for every record of a JSONL file.
    Extract {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Run configuration for the prompt, decoding cap and pair mode;
        /// `config.txt` next to the checkpoint when omitted and present.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        prompt: Option<String>,
        /// Per-sentence generated text and discarded relations as JSONL.
        #[arg(long)]
        audit: Option<PathBuf>,
    },
    /// Score predictions against gold.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Receives metrics.json and metrics.txt.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train and score one mini backend per prompt.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// One prompt per line; the built-in set when omitted.
        #[arg(long)]
        prompts: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Append concatenated sentence pairs to a training file.
    Augment {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        num_pairs: usize,
        #[arg(long, env = "COMPEX_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Write a templated synthetic corpus with known gold relations.
    Synth {
        #[arg(long, default_value_t = 500)]
        sentences: usize,
        /// default, camera-review, or compsent. The last two fix the size.
        #[arg(long, default_value = "default")]
        shape: String,
        #[arg(long, env = "COMPEX_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
}

fn exit_code(error: &anyhow::Error) -> u8 {
    if error.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match error.downcast_ref::<compex_core::Error>() {
        Some(e) if e.is_input_error() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::Prepare {
            input,
            output,
            format,
            stats,
        } => commands::prepare(&input, &output, format.as_deref(), stats.as_deref()),
        Command::Train(run) => commands::train(&run),
        Command::Extract {
            checkpoint,
            input,
            output,
            config,
            prompt,
            audit,
        } => commands::extract(
            &checkpoint,
            &input,
            &output,
            config.as_deref(),
            prompt,
            audit.as_deref(),
        ),
        Command::Eval {
            predictions,
            gold,
            out_dir,
        } => commands::eval(&predictions, &gold, &out_dir),
        Command::Ablate {
            run,
            prompts,
            output,
        } => commands::ablate(&run, prompts.as_deref(), &output),
        Command::Augment {
            input,
            num_pairs,
            seed,
            output,
        } => commands::augment(&input, num_pairs, seed, &output),
        Command::Synth {
            sentences,
            shape,
            seed,
            output,
        } => commands::synth(sentences, &shape, seed, &output),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!("error: {}", message.join(": ").replace('\n', " "));
            ExitCode::from(exit_code(&e))
        }
    }
}
