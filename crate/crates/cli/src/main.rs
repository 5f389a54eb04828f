//! `copulaeda`: run copula-based EDAs on the benchmark functions.

mod commands;
mod config;
mod error;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CritPopArgs, IndepRunsArgs, RunArgs};

#[derive(Debug, Parser)]
#[command(name = "copulaeda", version, about = "Copula-based estimation of distribution algorithms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// A single run, optionally with per-generation progress.
    Run(RunArgs),
    /// Independent runs with a per-run table and summary statistics.
    IndepRuns(IndepRunsArgs),
    /// Bisection search for the critical population size.
    Critpop(CritPopArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(a) => commands::cmd_run(a),
        Command::IndepRuns(a) => commands::cmd_indep_runs(a),
        Command::Critpop(a) => commands::cmd_critpop(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_negative_bounds() {
        let cli = Cli::try_parse_from([
            "copulaeda", "run", "-a", "gceda", "-f", "sphere", "--lower", "-300", "--upper", "900", "--target", "-1e5",
        ])
        .unwrap();
        let Command::Run(a) = cli.command else { panic!() };
        assert_eq!(a.common.lower.as_deref(), Some("-300"));
        assert_eq!(a.common.target, Some(-1e5));
    }
}
