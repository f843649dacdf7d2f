//! Command-line front end: configuration, output files and the subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{Overrides, RunConfig};
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "bsgp", version, about = "Spline-projected GP surface priors and excess-mortality models")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub state: Option<String>,
    /// projected-gp, gp2d, bsplines or psplines.
    #[arg(long, global = true)]
    pub prior: Option<String>,
    #[arg(long, global = true)]
    pub knots_age: Option<usize>,
    #[arg(long, global = true)]
    pub knots_week: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Simulation study on a synthetic count surface.
    Simulate,
    /// Fit the mortality model to one state.
    Fit,
    /// Gaussian benchmark on a lattice data set.
    Benchmark,
    /// Weekly and cumulative predictive deaths for age groups.
    Predict,
    /// Resurgence meta-regression over fitted states.
    Meta,
}

impl GlobalArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            state: self.state.clone(),
            prior: self.prior.clone(),
            knots_age: self.knots_age,
            knots_week: self.knots_week,
        }
    }
}

/// Runs one subcommand and returns the files it wrote.
pub fn run(cli: &Cli) -> CliResult<Vec<PathBuf>> {
    let resolved = RunConfig::load(cli.global.config.as_deref(), &cli.global.overrides())?;
    match cli.command {
        Command::Simulate => commands::cmd_simulate(&resolved),
        Command::Fit => commands::cmd_fit(&resolved),
        Command::Benchmark => commands::cmd_benchmark(&resolved),
        Command::Predict => commands::cmd_predict(&resolved),
        Command::Meta => commands::cmd_meta(&resolved),
    }
}
