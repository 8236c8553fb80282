//! `mvcode`: verification, bound tables, proof fixtures, round trips and the
//! small-instance oracle.
//!
//! Exit codes: 0 pass, 1 violation or mismatch, 2 configuration, budget or
//! I/O error.

mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use commands::Status;
use config::{Command, RunConfig};

fn run(cfg: &RunConfig) -> anyhow::Result<Status> {
    match &cfg.command {
        Command::Verify(a) => commands::cmd_verify(a),
        Command::Table(a) => commands::cmd_table(a),
        Command::Fixtures(a) => commands::cmd_fixtures(a),
        Command::Roundtrip(a) => commands::cmd_roundtrip(a),
        Command::Oracle(a) => commands::cmd_oracle(a),
    }
}

fn main() -> ExitCode {
    let cfg = RunConfig::parse();
    match run(&cfg) {
        Ok(Status::Pass) => ExitCode::SUCCESS,
        Ok(Status::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
