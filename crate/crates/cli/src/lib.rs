//! Command line, JSON configuration and file formats for `chain-lqg`.

pub mod commands;
pub mod config;
pub mod controller_file;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::controller_file::Mode;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "chain-lqg", version, about = "Decentralized LQ control of vehicle platoons")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a controller and write it with its cost report.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Simulate controllers on the configured scenario.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Controller file; repeatable. Defaults to centralized,
        /// decentralized and suboptimal synthesized on the fly.
        #[arg(long = "controller")]
        controllers: Vec<PathBuf>,
        #[arg(long, default_value_t = 20)]
        replications: usize,
        #[arg(long, env = config::SEED_ENV)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Label of the reference controller for relative changes.
        #[arg(long)]
        baseline: Option<String>,
    },
    /// Run property suites; exits 0 only if every check passes.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Suite name, comma-separated list, or `all`.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, env = config::SEED_ENV)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Synth { config, mode, out } => {
            let cfg = commands::load_config(config.as_deref(), None)?;
            commands::cmd_synth(&cfg, mode, &out)
        }
        Command::Simulate { config, controllers, replications, seed, out, baseline } => {
            let cfg = commands::load_config(config.as_deref(), seed)?;
            let args = commands::SimulateArgs { controllers, replications, baseline };
            commands::cmd_simulate(&cfg, &args, &out)
        }
        Command::Verify { config, suite, seed, out } => {
            let cfg = commands::load_config(config.as_deref(), seed)?;
            let suites = commands::parse_suites(&suite)?;
            commands::cmd_verify(&cfg, &suites, out.as_deref())
        }
    }
}
