//! Command-line simulator for over-the-air federated multi-task learning:
//! gradient recovery experiments, state-evolution traces, end-to-end
//! training over a fading multiple-access channel, and convergence-bound
//! audits, all logged as reproducible CSV.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod bound;
mod config;
mod datasets;
mod output;
mod recover;
mod schema;
mod se;
mod train;

use config::SchemeChoice;

/// Flags shared by every experiment subcommand.
#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(long, value_name = "FILE")]
    pub config: PathBuf,
    /// Replace the config's master seed (and any seed sweep) with one seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated seed sweep; wins over --seed and the config.
    #[arg(long, value_delimiter = ',', value_name = "S1,S2,...")]
    pub seeds: Option<Vec<u64>>,
    /// Output directory (else $OAFMTL_OUT_DIR, else the config's out_dir).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Scheme selection override.
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeChoice>,
    /// Measure compression as s/d instead of 2s/d.
    #[arg(long)]
    pub paper_ratio: bool,
    /// Use the σ_w²/(4γ²K²) effective-noise convention.
    #[arg(long)]
    pub paper_sigma: bool,
    /// Worker threads for the seed sweep (0 = one per CPU core).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Parser)]
#[command(name = "oafmtl", version, about = "Over-the-air federated multi-task learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Recover superimposed sparse gradients from a synthesized observation.
    Recover(RunArgs),
    /// Print the state-evolution trace for the configured priors.
    Se(RunArgs),
    /// Train federated tasks end to end over the simulated channel.
    Train(RunArgs),
    /// Compare measured loss gaps against the convergence bound.
    Bound(RunArgs),
    /// Describe every output file and column.
    Schema,
}

fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Recover(args) => recover::run(&config::load(args)?),
        Command::Se(args) => se::run(&config::load(args)?),
        Command::Train(args) => train::run(&config::load(args)?),
        Command::Bound(args) => bound::run(&config::load(args)?),
        Command::Schema => {
            print!("{}", schema::SCHEMA_TEXT);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
