//! `cqf` — validate, average, and synthesize coherent quantum observers
//! for directly coupled harmonic oscillators.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cqfkit::cli::{self, GlobalArgs, Horizon, MomentMethod, MomentsArgs, SynthArgs};

#[derive(Parser)]
#[command(name = "cqf", version, about = "Coherent quantum observer synthesis toolkit")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Model configuration file (TOML).
    #[arg(long, global = true, default_value = "config.toml")]
    config: PathBuf,
    /// Emit JSON diagnostics and outputs.
    #[arg(long, global = true)]
    json: bool,
    /// Suppress human-readable chatter.
    #[arg(long, global = true)]
    quiet: bool,
    /// Override the frequency-quadrature tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the config; check admissibility of a preset decision pair.
    Check,
    /// Discounted (or infinite-horizon) moment averages of the plant.
    Moments {
        /// Monomial degree.
        #[arg(long, default_value_t = 2)]
        degree: usize,
        /// Averaging horizon: a positive number or "inf" (defaults to cost.tau).
        #[arg(long)]
        horizon: Option<String>,
        /// Computation route: ale | freq | modes | all.
        #[arg(long, default_value = "all")]
        method: String,
        /// Output file (CSV by default, JSON with --json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthesize the observer (or verify a preset one) and write a report.
    Synth {
        /// Seed list overriding the config (comma-separated).
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Per-iteration trace CSV path.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Report JSON path.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Evaluate the preset decision pair without optimizing.
        #[arg(long)]
        verify_only: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let global = GlobalArgs {
        config: cli.global.config,
        json: cli.global.json,
        quiet: cli.global.quiet,
        tol: cli.global.tol,
    };
    let code = match cli.command {
        Command::Check => cli::cmd_check(&global),
        Command::Moments { degree, horizon, method, out } => {
            let horizon = match horizon.as_deref().map(Horizon::parse).transpose() {
                Ok(h) => h,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(cli::EXIT_PARSE as u8);
                }
            };
            let method = match MomentMethod::parse(&method) {
                Ok(m) => m,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(cli::EXIT_PARSE as u8);
                }
            };
            cli::cmd_moments(&global, &MomentsArgs { degree, horizon, method, out })
        }
        Command::Synth { seeds, trace, report, verify_only } => {
            cli::cmd_synth(&global, &SynthArgs { seeds, trace, report, verify_only })
        }
    };
    ExitCode::from(code as u8)
}
