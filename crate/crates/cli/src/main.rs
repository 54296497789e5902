//! `lbcdo`: price, calibrate and prepare data for the large-basket CDO model.
//!
//! Exit codes: 0 success, 1 numeric failure, 2 usage or config error,
//! 3 I/O error.

mod commands;
mod config;
mod io;
mod report;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "lbcdo", version, about = "Large-basket structural CDO pricing and calibration")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; every section is optional.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Overrides `engine.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output folder (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Prices tranches and the index with one or more schemes.
    Price(commands::PriceArgs),
    /// Fits sigma and rho to tranche and index quotes.
    Calibrate(commands::CalibrateArgs),
    /// Writes the Monte Carlo CDS training dataset and its JSON sidecar.
    GenDataset(commands::DatasetArgs),
    /// Infers x0 from CDS quotes and writes plot-ready histogram and density.
    InvertX0(commands::InvertArgs),
    /// Writes model-generated quote files and a matching config.
    SynthMarket(commands::SynthArgs),
}

/// Error raised for bad arguments, configs or input files (exit code 2).
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() || cause.is::<toml::de::Error>() {
            return 2;
        }
        if cause.is::<std::io::Error>() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<csv::Error>() {
            return if e.is_io_error() { 3 } else { 2 };
        }
        if let Some(e) = cause.downcast_ref::<lbcdo::Error>() {
            use lbcdo::Error as E;
            return match e {
                E::InvalidParameter(_) | E::Schedule(_) | E::Json(_) => 2,
                E::Io(_) | E::Weights { .. } | E::Dataset(_) => 3,
                E::DegenerateQuote(_) | E::NoSolution { .. } | E::Numeric(_) => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = commands::Context::new(&cli.global).and_then(|ctx| match &cli.command {
        Command::Price(a) => commands::price(&ctx, a),
        Command::Calibrate(a) => commands::calibrate(&ctx, a),
        Command::GenDataset(a) => commands::gen_dataset(&ctx, a),
        Command::InvertX0(a) => commands::invert_x0(&ctx, a),
        Command::SynthMarket(a) => commands::synth_market(&ctx, a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
