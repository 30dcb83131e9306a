//! `idam`: generate registration pairs, train, register, and benchmark.

mod commands;
mod common;
mod config;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "idam", version, about = "Learned rigid point-cloud registration")]
struct Cli {
    /// JSON run configuration; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample shapes and write source/target/ground-truth pairs.
    GenData,
    /// Train a model on the generated training pairs.
    Train,
    /// Register one pair of XYZ files and print the 12-number transform.
    Register {
        source: PathBuf,
        target: PathBuf,
        /// Write per-point significance/validity scores to this CSV.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Evaluate methods on generated pairs and write a metrics CSV.
    Benchmark,
    /// Run the built-in property checks.
    Selftest,
    /// Print the effective configuration as JSON.
    ShowConfig,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::GenData => {
            commands::gen_data::run(&cfg)?;
        }
        Command::Train => {
            commands::train::run(&cfg)?;
        }
        Command::Register { source, target, dump } => {
            if dump.is_some() {
                cfg.register.dump = dump;
            }
            commands::register::run(&cfg, &source, &target)?;
        }
        Command::Benchmark => {
            commands::benchmark::run(&cfg)?;
        }
        Command::Selftest => commands::selftest::run(&cfg)?,
        Command::ShowConfig => println!("{}", serde_json::to_string_pretty(&cfg)?),
    }
    Ok(())
}
