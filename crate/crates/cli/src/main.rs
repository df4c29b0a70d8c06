use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

mod commands;
mod output;

use commands::run;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Solve,
    Residual,
    Simulate,
    Evaluate,
    Cost,
    Sweep,
    ExactVsEuler,
    Moments,
}

impl Command {
    pub fn is_stochastic(&self) -> bool {
        matches!(self, Command::Simulate | Command::Evaluate | Command::Cost | Command::ExactVsEuler | Command::Moments)
    }
}

/// Exploratory linear-quadratic control: closed-form solution, simulation and
/// Monte Carlo checks.
#[derive(Debug, Parser)]
#[command(name = "exlq", version)]
pub struct Cli {
    /// Model and run configuration (flat key = value file).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum)]
    pub command: Command,
    /// Random seed; overrides sim.seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Run even when the standing assumptions fail; outputs are marked unverified.
    #[arg(long)]
    pub override_assumptions: bool,
    /// Worker threads; overrides sim.parallelism. Results do not depend on it.
    #[arg(long)]
    pub parallelism: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("exlq: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::commands::Failure;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn command_names() {
        let cli = Cli::try_parse_from(["exlq", "--config", "x", "--command", "exact-vs-euler"]).unwrap();
        assert_eq!(cli.command, Command::ExactVsEuler);
        assert!(!Command::Solve.is_stochastic());
        assert!(Command::Moments.is_stochastic());
    }

    #[test]
    fn failure_codes() {
        assert_eq!(Failure::Config("x".into()).exit_code(), 1);
        assert_eq!(Failure::Validation("x".into()).exit_code(), 2);
        assert_eq!(Failure::Numerical("x".into()).exit_code(), 3);
    }
}
