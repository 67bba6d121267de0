//! bootleg-sync: align MIDI performances to sheet-music strips.
//!
//! Exit codes: 0 success, 2 I/O failure, 3 invalid input or usage,
//! 4 alignment infeasible.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use bootleg_core::pipeline::SheetMode;
use bootleg_core::{Error, ErrorKind};
use clap::{Parser, Subcommand};

use crate::config::Config;

#[derive(Parser)]
#[command(name = "bootleg-sync", version, about = "Align MIDI performances to sheet-music image strips")]
struct Cli {
    /// Run configuration (key = value lines)
    #[arg(long, global = true, env = "BOOTLEG_SYNC_CONFIG")]
    config: Option<PathBuf>,

    /// Sheet projection: noteheads, classical or raw
    #[arg(long, global = true)]
    mode: Option<String>,

    /// Gap threshold in seconds
    #[arg(long, global = true)]
    tau: Option<f64>,

    /// Worker thread cap
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed for `synth`
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect staff geometry and write per-strip diagnostics
    Staves,
    /// Align the performance to the strips and export the path
    Align,
    /// Score the alignment against beat annotations
    Eval,
    /// Draw one strip with its boxes and the aligned MIDI bootleg
    Render {
        /// Strip to draw
        #[arg(long, default_value_t = 0)]
        strip: usize,
    },
    /// Generate a synthetic corpus directory
    Synth,
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Io => 2,
        ErrorKind::Validation => 3,
        ErrorKind::Infeasible => 4,
    }
}

fn effective_config(cli: &Cli) -> Result<Config, Error> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(mode) = &cli.mode {
        config.mode = mode.parse::<SheetMode>()?;
    }
    if let Some(tau) = cli.tau {
        config.tau_sec = tau;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Validation("--threads must be positive".into()));
        }
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let config = effective_config(&cli)?;
    match cli.command {
        Command::Staves => commands::staves(&config),
        Command::Align => commands::align(&config),
        Command::Eval => commands::eval(&config),
        Command::Render { strip } => commands::render(&config, strip),
        Command::Synth => commands::synth(&config),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 3 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
