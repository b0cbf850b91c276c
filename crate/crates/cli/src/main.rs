//! `morphfg`: train, apply and inspect factorial CRF morphological taggers.

mod commands;
mod config;
mod error;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{EvalArgs, ExportArgs, SynthArgs, TagArgs};
use config::{CommonFlags, RunFlags};
use error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "morphfg", version, about = "Factorial CRF morphological tagger")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and save it with its resolved configuration.
    Train {
        #[command(flatten)]
        run: RunFlags,
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Tag a CoNLL-U file.
    Tag {
        #[command(flatten)]
        args: TagArgs,
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Score a model, or a prediction file, against gold annotations.
    Eval {
        #[command(flatten)]
        args: EvalArgs,
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Write a transition or pairwise weight table as labeled CSV.
    ExportWeights {
        #[command(flatten)]
        args: ExportArgs,
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Train with both factor families, each alone, and neither; compare on --test.
    Ablate {
        #[command(flatten)]
        run: RunFlags,
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Generate a synthetic annotated corpus.
    Synth(SynthArgs),
}

fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Train { run, common } => commands::train_command(run, common),
        Command::Tag { args, common } => commands::tag_command(args, common),
        Command::Eval { args, common } => commands::eval_command(args, common),
        Command::ExportWeights { args, common } => commands::export_command(args, common),
        Command::Ablate { run, common } => commands::ablate_command(run, common),
        Command::Synth(args) => commands::synth_command(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
