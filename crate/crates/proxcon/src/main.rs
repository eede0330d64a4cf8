use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use proxcon::cli::{dispatch, CliCommand, EpsilonSelector, SampleSizeMode};

#[derive(Parser)]
#[command(name = "proxcon", version)]
#[command(
    about = "Distributed constrained convex optimization over time-varying networks, \
             with scenario-based feasibility certificates"
)]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Check the network, step-schedule and feasibility assumptions
    Validate {
        /// Experiment config (JSON)
        config: PathBuf,
    },
    /// Execute the distributed iteration and write artifacts
    Run {
        config: PathBuf,
        /// Trace CSV destination (overrides the config's output block)
        #[arg(long)]
        trace_csv: Option<PathBuf>,
        /// Summary JSON destination (overrides the config's output block)
        #[arg(long)]
        summary_json: Option<PathBuf>,
    },
    /// Print violation-probability bounds from the scenario block
    Epsilon {
        config: PathBuf,
        /// common | common-improved | naive | tight | all
        #[arg(long, default_value = "all")]
        method: EpsilonSelector,
    },
    /// Find the smallest sample count achieving a target bound
    Samplesize {
        config: PathBuf,
        /// Target violation probability in (0, 1)
        #[arg(long)]
        target: f64,
        /// common | tight-uniform
        #[arg(long, default_value = "tight-uniform")]
        mode: SampleSizeMode,
        /// Give up above this sample count
        #[arg(long, default_value_t = 100_000_000)]
        cap: u64,
    },
    /// Estimate the violation probability of a stored solution
    Violation {
        config: PathBuf,
        /// Solution vector (JSON array, or an object with an "x" field)
        solution: PathBuf,
        /// Fresh samples (defaults to the benchmark's validation_samples)
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the regression benchmark pipeline
    Bench {
        config: PathBuf,
        #[arg(long)]
        trace_csv: Option<PathBuf>,
        #[arg(long)]
        summary_json: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, config) = match cli.command {
        Commands::Validate { config } => (CliCommand::Validate, config),
        Commands::Run {
            config,
            trace_csv,
            summary_json,
        } => (
            CliCommand::Run {
                trace_csv,
                summary_json,
            },
            config,
        ),
        Commands::Epsilon { config, method } => (CliCommand::Epsilon { method }, config),
        Commands::Samplesize {
            config,
            target,
            mode,
            cap,
        } => (CliCommand::SampleSize { target, mode, cap }, config),
        Commands::Violation {
            config,
            solution,
            samples,
            seed,
        } => (
            CliCommand::Violation {
                solution,
                samples,
                seed,
            },
            config,
        ),
        Commands::Bench {
            config,
            trace_csv,
            summary_json,
        } => (
            CliCommand::Bench {
                trace_csv,
                summary_json,
            },
            config,
        ),
    };
    ExitCode::from(dispatch(&command, &config).clamp(0, 255) as u8)
}
