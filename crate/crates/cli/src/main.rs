use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pec_cli::{commands, CliError, Context, PipelineConfig};
use pec_core::fitness::FitnessMode;

/// Surrogate-assisted design optimization of a half-bridge power converter.
#[derive(Debug, Parser)]
#[command(name = "pecopt", version)]
struct Cli {
    /// TOML pipeline configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Use the predicted means instead of interval draws in the fitness.
    #[arg(long, global = true)]
    deterministic_fitness: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample and label the design dataset.
    Generate,
    /// Train the classifiers and the regressor; cross-validate the classifiers.
    Train,
    /// Score the trained models on the held-out split.
    Evaluate,
    /// Run the optimizer comparison on the surrogate fitness.
    Optimize,
    /// Summarize all artifacts as markdown.
    Report,
    /// Run every step in order.
    Pipeline,
}

fn run(cli: Cli) -> Result<String, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    let mode = cli.deterministic_fitness.then_some(FitnessMode::Deterministic);
    let ctx = Context::new(cfg)?;
    let summary = match cli.command {
        Command::Generate => commands::generate(&ctx)?,
        Command::Train => commands::train(&ctx)?,
        Command::Evaluate => commands::evaluate(&ctx)?,
        Command::Optimize => commands::optimize(&ctx, mode)?,
        Command::Report => return commands::report(&ctx),
        Command::Pipeline => commands::pipeline(&ctx, mode)?,
    };
    Ok(serde_json::to_string_pretty(&summary).expect("JSON values serialize"))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(out) => {
            println!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
