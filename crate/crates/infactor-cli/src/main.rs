//! Command line interface for the infactor library.
//!
//! Subcommands read one JSON configuration document (with repeatable
//! `--set key=value` overrides) and write their artifacts into the output
//! directory. Failures print a machine-readable error JSON on stderr and
//! exit nonzero.

use clap::{Parser, Subcommand};
use infactor::io::{self, Command as RunCommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "infactor",
    about = "Infinite factor models with structured increasing shrinkage",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Root seed; overrides the config value.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel sections (0 = automatic).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    output: PathBuf,
    /// Dotted-path config override, repeatable (example:
    /// --set chain.n_iterations=500).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Commands {
    /// Fit the SIS model to a dataset and write chain + summary artifacts.
    Fit(CommonArgs),
    /// Run the synthetic scenario harness over replicates.
    Simulate(CommonArgs),
    /// Monte Carlo verification of prior properties.
    PriorCheck(CommonArgs),
    /// Recompute posterior summaries from a stored chain checkpoint.
    Summarize(CommonArgs),
}

fn execute(kind: RunCommand, args: &CommonArgs) -> infactor::Result<()> {
    if args.threads > 0 {
        // Thread count affects scheduling only; results are stream-indexed
        // and deterministic either way.
        rayon::ThreadPoolBuilder::new()
            .num_threads(args.threads)
            .build_global()
            .ok();
    }
    let mut config = io::load_config(&args.config, &args.set)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let config_dir = args
        .config
        .parent()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    let outcome = io::run_command(kind, &config, &config_dir, &args.output)?;
    for artifact in &outcome.artifacts {
        println!("{}", args.output.join(artifact).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Commands::Fit(a) => (RunCommand::Fit, a),
        Commands::Simulate(a) => (RunCommand::Simulate, a),
        Commands::PriorCheck(a) => (RunCommand::PriorCheck, a),
        Commands::Summarize(a) => (RunCommand::Summarize, a),
    };
    match execute(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", io::error_json(&err));
            ExitCode::FAILURE
        }
    }
}
