//! `deltabk`: synthesize, verify and simulate incrementally stabilizing
//! backstepping controllers.
//!
//! Exit codes: 0 success, 1 failed check, 2 configuration error, 3 runtime
//! domain error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "deltabk", version, about = "Backstepping synthesis with contraction-metric certification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize the controller and print its structure.
    Synthesize(SynthesizeArgs),
    /// Certify the contraction and input conditions on sampled points.
    Verify(CommonArgs),
    /// Integrate trajectory pairs and check the incremental bounds.
    Simulate(CommonArgs),
    /// Synthesize, verify and simulate the generator with default settings.
    Demo(CommonArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricChoice {
    /// The metric produced by synthesis (pulled back to plant coordinates).
    Synthesized,
    /// The identity matrix; a deliberately wrong metric for sanity checks.
    Identity,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(short = 'c', long = "config", value_name = "PATH")]
    config: Option<PathBuf>,
    /// Built-in system, replacing the configured one.
    #[arg(long, value_name = "NAME")]
    system: Option<String>,
    /// Contraction rate.
    #[arg(long, value_name = "R")]
    lambda: Option<f64>,
    /// Sampling seed for verification.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Metric to certify.
    #[arg(long, value_enum, default_value_t = MetricChoice::Synthesized)]
    metric: MetricChoice,
}

#[derive(Debug, Clone, Args)]
pub struct SynthesizeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Point `x1,...,xn` (design coordinates) at which to evaluate the control law; repeatable.
    #[arg(long, value_name = "x1,...,xn", allow_hyphen_values = true)]
    eval: Vec<String>,
    /// External input used with --eval.
    #[arg(long, value_name = "V", default_value_t = 0.0, allow_hyphen_values = true)]
    input: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synthesize(a) => commands::synthesize(&a.common, &a.eval, a.input),
        Command::Verify(a) => commands::verify(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Demo(a) => commands::demo(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
