//! `reprobe`: config-driven pipelines over the core analysis crate.
//!
//! Exit codes: 0 success, 1 internal error, 2 configuration error,
//! 3 input data failed validation.

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::{ConfigError, Overrides, PipelineConfig};
use output::Ctx;

#[derive(Parser)]
#[command(
    name = "reprobe",
    version,
    about = "Probe, debias and evaluate dense-retriever embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Online-code compression of every label set on the embeddings.
    Probe,
    /// Fit a nullspace projection for the first label set and re-probe.
    Inlp,
    /// Exact top-k dot-product retrieval, optionally through a projection.
    Retrieve,
    /// Per-query and aggregate metrics of a run against qrels.
    Eval,
    /// Per-group metric means and the female minus male gap.
    Fairness,
    /// Flag entity and gendered queries; build groups from annotations.
    FilterQueries,
    /// Pearson/Spearman correlation between two CSV columns.
    Correlate,
    /// Per-dataset seed ranks, best/worst flips and distributions.
    RankSeeds,
    /// Norm and pairwise cosine/dot statistics of an embedding matrix.
    Anisotropy,
    /// Write a complete synthetic fixture set and a config pointing at it.
    Synth,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Probe => "probe",
            Command::Inlp => "inlp",
            Command::Retrieve => "retrieve",
            Command::Eval => "eval",
            Command::Fairness => "fairness",
            Command::FilterQueries => "filter-queries",
            Command::Correlate => "correlate",
            Command::RankSeeds => "rank-seeds",
            Command::Anisotropy => "anisotropy",
            Command::Synth => "synth",
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let ctx = Ctx {
        command: cli.command.name(),
        cfg: PipelineConfig::load(&cli.overrides)?,
        dry_run: cli.overrides.dry_run,
    };
    match cli.command {
        Command::Probe => commands::probe(&ctx),
        Command::Inlp => commands::inlp(&ctx),
        Command::Retrieve => commands::retrieve(&ctx),
        Command::Eval => commands::eval(&ctx),
        Command::Fairness => commands::fairness(&ctx),
        Command::FilterQueries => commands::filter_queries(&ctx),
        Command::Correlate => commands::correlate(&ctx),
        Command::RankSeeds => commands::rank_seeds(&ctx),
        Command::Anisotropy => commands::anisotropy(&ctx),
        Command::Synth => commands::synth(&ctx),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<ConfigError>()) {
        2
    } else if err.chain().any(|e| e.is::<std::io::Error>()) {
        1
    } else if commands::is_data_error(err) {
        3
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
