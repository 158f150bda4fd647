//! Command-line driver: configuration, experiments and plot-ready output.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;

use clap::Parser;

use crate::cli::{Cli, Command};
use crate::commands::{Context, Verbosity};
use crate::config::RunConfig;
use crate::error::{HarnessError, Result};
use crate::manifest::OutputLock;

fn execute(cli: &Cli) -> Result<commands::Outcome> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(HarnessError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| HarnessError::Usage(format!("cannot set up {n} threads: {e}")))?;
    }
    let config = RunConfig::load(&cli.config)?;
    let mut ctx = Context::new(config, cli.seed);
    ctx.timings = cli.timings;
    ctx.verbosity = if cli.quiet {
        Verbosity::Quiet
    } else if cli.verbose {
        Verbosity::Verbose
    } else {
        Verbosity::Normal
    };

    let _lock = OutputLock::acquire(&cli.out)?;
    let dir = cli.out.as_path();
    match &cli.command {
        Command::Field(o) => commands::cmd_field(&ctx, o, dir, "."),
        Command::Trace(o) => commands::cmd_trace(&ctx, o, dir, "."),
        Command::Measure(o) => commands::cmd_measure(&ctx, o, dir, "."),
        Command::Reconstruct(o) => commands::cmd_reconstruct(&ctx, o, dir, "."),
        Command::All => commands::cmd_all(&ctx, dir),
    }
}

/// Run the command line and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(outcome) if outcome.failures.is_empty() => 0,
        Ok(outcome) => {
            for f in &outcome.failures {
                eprintln!("error: {f}");
            }
            3
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
