//! `topogen`: dataset preparation, training, generation and serving for
//! sketch-to-terrain models.

mod cmd;
mod config;
mod error;
mod manifest;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use topogen_core::Execution;

use crate::config::ConfigFile;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "topogen", version, about = "Sketch-to-terrain pipeline")]
struct Cli {
    /// JSON file with optional `dataset`, `vae` and `gan` sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run data-parallel stages on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tile DEM files and write paired sketch/DEM training data.
    Prepare(cmd::prepare::Args),
    /// Train the sketch autoencoder.
    TrainVae(cmd::train::VaeArgs),
    /// Train the sketch-to-DEM generator.
    TrainGan(cmd::train::GanArgs),
    /// Generate a DEM from one sketch.
    Generate(cmd::generate::Args),
    /// Blend two sketches in latent space and generate each blend.
    Interpolate(cmd::generate::InterpolateArgs),
    /// Generate variants of one sketch by sampling its latent code.
    Variants(cmd::generate::VariantsArgs),
    /// Score generated DEMs against a prepared test split.
    Eval(cmd::eval::Args),
    /// Start the HTTP service.
    Serve(cmd::serve::Args),
}

/// Options shared by every command.
pub struct Context {
    pub file: ConfigFile,
    pub exec: Execution,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let ctx = Context {
        file: ConfigFile::load(cli.config.as_deref())?,
        exec,
    };
    match cli.command {
        Command::Prepare(a) => cmd::prepare::run(&ctx, a),
        Command::TrainVae(a) => cmd::train::run_vae(&ctx, a),
        Command::TrainGan(a) => cmd::train::run_gan(&ctx, a),
        Command::Generate(a) => cmd::generate::run(&ctx, a),
        Command::Interpolate(a) => cmd::generate::run_interpolate(&ctx, a),
        Command::Variants(a) => cmd::generate::run_variants(&ctx, a),
        Command::Eval(a) => cmd::eval::run(&ctx, a),
        Command::Serve(a) => cmd::serve::run(&ctx, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
