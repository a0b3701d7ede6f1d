//! `typeb`: predict, simulate, compare and moments.
//!
//! Exit codes: 0 success, 2 invalid configuration or input, 3 numerical
//! failure (non-convergence or non-finite values).

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::Parser;
use typeb_core::Error;

use crate::config::RunConfig;

fn exit_code(e: &anyhow::Error) -> u8 {
    let core = e.chain().find_map(|c| c.downcast_ref::<Error>());
    match core {
        Some(Error::NonConvergence { .. } | Error::NonFinite(_)) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    match commands::run(RunConfig::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
