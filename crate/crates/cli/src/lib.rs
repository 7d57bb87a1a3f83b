//! The `tailrate` command line: scenario files in, CSV/JSON artifacts out.

pub mod error;
pub mod report;
pub mod run;
pub mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub use error::CliError;
pub use run::{run, Outcome, RunOptions, Summary};
pub use scenario::{LoadedScenario, Scenario, Task};

#[derive(Debug, Parser)]
#[command(name = "tailrate", version, about = "Tail decay rates of monotone-separable queueing networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario file and write its artifacts to <output_dir>/<name>/.
    Run {
        scenario: PathBuf,
        /// Overrides the scenario's output_dir (default: $TAILRATE_OUTPUT_DIR, then ./tailrate-out).
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Worker threads. Artifacts are identical for any value.
        #[arg(long, env = "TAILRATE_WORKERS")]
        workers: Option<usize>,
    },
    /// Summarize every run found in an artifact directory.
    Report { dir: PathBuf },
}

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_MISMATCH: u8 = 2;

fn diagnose(err: &CliError) {
    eprintln!("error[{}]: {err}", err.kind());
}

/// Runs a parsed command line, printing to stdout/stderr.
pub fn main_with(cli: Cli) -> ExitCode {
    match cli.command {
        Command::Run {
            scenario,
            output_dir,
            workers,
        } => match run::run(&scenario, &RunOptions { output_dir, workers }) {
            Ok(outcome) => {
                for check in &outcome.summary.checks {
                    let mark = match check.passed {
                        Some(true) => "pass",
                        Some(false) => "FAIL",
                        None => "info",
                    };
                    println!("{mark}  {}: {}", check.name, check.detail);
                }
                println!("artifacts: {}", outcome.dir.display());
                if outcome.passed() {
                    ExitCode::from(EXIT_OK)
                } else {
                    eprintln!("error[mismatch]: verification failed for {}", outcome.summary.meta.scenario);
                    ExitCode::from(EXIT_MISMATCH)
                }
            }
            Err(e) => {
                diagnose(&e);
                ExitCode::from(EXIT_ERROR)
            }
        },
        Command::Report { dir } => match report::render(&dir) {
            Ok(table) => {
                print!("{table}");
                ExitCode::from(EXIT_OK)
            }
            Err(e) => {
                diagnose(&e);
                ExitCode::from(EXIT_ERROR)
            }
        },
    }
}
