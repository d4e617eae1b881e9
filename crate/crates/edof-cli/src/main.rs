//! `edof` - phase-coded-aperture EDOF camera emulator.
//!
//! Subcommands cover the whole experiment surface: forward simulation of
//! coded captures, dictionary construction, iterative and network
//! reconstruction, training, fixed-point conversion, evaluation tables,
//! and the hardware throughput model.

use std::process::ExitCode;

use clap::Parser;

mod args;
mod commands;
mod config;

use args::Cli;

fn main() -> ExitCode {
    // Honor the thread-count env var before any rayon work starts.
    if let Ok(threads) = std::env::var("EDOF_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap already formats --help/--version on stdout.
            if e.use_stderr() {
                eprintln!(
                    "{}",
                    serde_json::json!({
                        "error": "usage",
                        "message": e.to_string(),
                    })
                );
                return ExitCode::from(2);
            }
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = match &err {
                edof_core::Error::InvalidArgument(_) => 2,
                edof_core::Error::Io(e) if e.kind() == std::io::ErrorKind::NotFound => 2,
                _ => 1,
            };
            eprintln!(
                "{}",
                serde_json::json!({
                    "error": "failed",
                    "message": err.to_string(),
                })
            );
            ExitCode::from(code)
        }
    }
}
