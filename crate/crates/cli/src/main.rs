//! `finsec` batch front end.
//!
//! Reads one TOML config, runs one command and writes deterministic CSV and
//! text files into the output directory. Exit status: 0 success, 1 failed
//! identity, 2 parse error, 3 validation error, 4 numerical failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod failure;
mod identities;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use commands::Output;
use config::RunConfig;
use failure::Failure;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Command {
    Sections,
    Sweep,
    Maps,
    Local,
    Report,
    Identities,
}

#[derive(Debug, Parser)]
#[command(
    name = "finsec",
    version,
    about = "Finite sections of operators with flip"
)]
struct Args {
    /// TOML config; optional for `identities`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum)]
    command: Command,
}

fn init_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("FINSEC_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Failure::Validation(format!(
            "FINSEC_THREADS must be a positive integer, got `{v}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Validation(e.to_string()))
}

fn run(args: &Args) -> Result<Vec<PathBuf>, Failure> {
    init_threads()?;
    let cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None if args.command == Command::Identities => RunConfig::empty(),
        None => {
            return Err(Failure::Validation(
                "--config is required for this command".into(),
            ))
        }
    };
    let mut out = Output::new(&args.out)?;
    match args.command {
        Command::Sections => commands::sections(&cfg, &mut out)?,
        Command::Sweep => commands::sweep(&cfg, &mut out)?,
        Command::Maps => commands::maps(&cfg, &mut out)?,
        Command::Local => commands::local(&cfg, &mut out)?,
        Command::Report => commands::report(&cfg, &mut out)?,
        Command::Identities => identities::run(&cfg.symbols, &mut out)?,
    }
    Ok(out.written)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(files) => {
            // a closed pipe on stdout is not an error of the run
            let mut stdout = std::io::stdout().lock();
            for f in files {
                let _ = writeln!(stdout, "{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("finsec: {e}");
            ExitCode::from(e.status())
        }
    }
}
