use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mcl_cli::scenario::{Scenario, ScenarioError};

/// Run scenarios over the simulated link.
#[derive(Parser)]
#[command(version)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and print the CSV report.
    Run {
        scenario: PathBuf,
        /// Also write the report here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

const EXIT_ASSERTION: u8 = 1;
const EXIT_SYNTAX: u8 = 2;

fn main() -> ExitCode {
    let Command::Run { scenario, csv } = Args::parse().command;
    let report = match Scenario::load(&scenario).and_then(|s| s.run()) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("mcl-sim: {e}");
            return ExitCode::from(EXIT_SYNTAX);
        }
    };
    let text = report.to_csv();
    print!("{text}");
    if let Some(path) = csv {
        if let Err(e) = std::fs::write(&path, &text) {
            eprintln!("mcl-sim: writing {}: {e}", path.display());
            return ExitCode::FAILURE;
        }
    }
    for (name, ok) in &report.results {
        eprintln!("{} {name}", if *ok { "PASS" } else { "FAIL" });
    }
    match report.verdict() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ ScenarioError::AssertionFailed(_)) => {
            eprintln!("mcl-sim: {e}");
            ExitCode::from(EXIT_ASSERTION)
        }
        Err(e) => {
            eprintln!("mcl-sim: {e}");
            ExitCode::from(EXIT_SYNTAX)
        }
    }
}
