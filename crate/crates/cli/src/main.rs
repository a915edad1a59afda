//! `molguide` command-line driver.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 runtime or protocol
//! error.

mod bench;
mod flags;
mod generate;
mod manifest;
mod optimize;
mod support;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use support::Failure;

#[derive(Parser)]
#[command(name = "molguide", version, about = "Similarity-guided molecule generation and optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the bundled n-gram model on a SMILES corpus.
    Train(train::Args),
    /// Sample molecules guided towards each guide molecule and report
    /// top-k similarities.
    Generate(generate::Args),
    /// Run the guided genetic optimizer against an oracle.
    Optimize(optimize::Args),
    /// Aggregate AUC over finished optimization runs.
    Bench(bench::Args),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Train(a) => train::run(a),
        Command::Generate(a) => generate::run(a),
        Command::Optimize(a) => optimize::run(a),
        Command::Bench(a) => bench::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("molguide: {error:#}");
            ExitCode::from(code)
        }
    }
}
