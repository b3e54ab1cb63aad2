//! Command-line driver: load an experiment config, validate it, run the
//! matching campaign, and report the emitted files.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use memdc_core::config::{load_config, validate_config, ExperimentConfig};
use memdc_core::runner::run;

#[derive(Parser)]
#[command(
    name = "memdc",
    about = "Simulator for memristor-based programmable DC sources",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for result records and the manifest.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a replicated DC sweep campaign.
    Sweep(RunArgs),
    /// Program one target and record a stability trace.
    Stability(RunArgs),
    /// Program one target repeatedly and log the tuning reports.
    Program(RunArgs),
    /// Evaluate the integration power-budget scan.
    Scale(RunArgs),
    /// Check a configuration without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(args_config: &Path) -> Result<ExperimentConfig> {
    load_config(args_config).with_context(|| format!("loading {}", args_config.display()))
}

fn execute(args: &RunArgs, expected_kind: &str) -> Result<()> {
    let mut config = load(&args.config)?;
    if config.experiment.name() != expected_kind {
        bail!(
            "config {} describes a '{}' experiment; invoke `memdc {}` instead",
            args.config.display(),
            config.experiment.name(),
            config.experiment.name()
        );
    }
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    let out_dir = args
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results"));
    let outcome = run(&config, &out_dir)?;
    println!("{}", outcome.summary);
    for path in &outcome.data_paths {
        println!("wrote {}", path.display());
    }
    println!("wrote {}", outcome.manifest_path.display());
    Ok(())
}

fn validate(config_path: &Path) -> Result<bool> {
    let config = load(config_path)?;
    let diagnostics = validate_config(&config);
    if diagnostics.is_empty() {
        println!("{}: ok", config_path.display());
        return Ok(true);
    }
    for diagnostic in &diagnostics {
        println!("{}: {}", config_path.display(), diagnostic);
    }
    Ok(false)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Sweep(args) => execute(args, "sweep").map(|()| true),
        Command::Stability(args) => execute(args, "stability").map(|()| true),
        Command::Program(args) => execute(args, "program").map(|()| true),
        Command::Scale(args) => execute(args, "scale").map(|()| true),
        Command::Validate { config } => validate(config),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(error) => {
            eprintln!("error: {error:#}");
            ExitCode::FAILURE
        }
    }
}
