//! `lpme` command-line tool: simulate, fit, evaluate, lift and measure
//! longitudinal manifolds.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numerical
//! failure.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod hexfloat;
pub mod io;
pub mod model_file;

use args::{Cli, Command};
use config::RunConfig;
use error::CliError;

/// The invocation as recorded in output headers.
pub fn command_line() -> String {
    let args: Vec<String> = std::env::args()
        .skip(1)
        .map(|a| {
            if a.contains(char::is_whitespace) {
                format!("'{a}'")
            } else {
                a
            }
        })
        .collect();
    format!("lpme {}", args.join(" "))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let config = RunConfig::load(cli.config.as_deref())?;
    if let Some(n) = cli.threads.or(config.threads) {
        if n == 0 {
            return Err(CliError::usage("--threads must be >= 1"));
        }
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let seed = cli.seed.or(config.seed);
    let line = command_line();
    match cli.command {
        Command::Simulate(a) => commands::simulate(&line, seed, &config, &a),
        Command::Fit(a) => commands::fit(&line, seed, &config, &a),
        Command::Evaluate(a) => commands::evaluate(&line, &config, &a),
        Command::Volume(a) => commands::volume(&line, &config, &a),
        Command::Lift(a) => commands::lift_cmd(&line, &a),
    }
}
