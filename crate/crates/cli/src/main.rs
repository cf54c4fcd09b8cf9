//! `advface`: attack, grid, sweep, report and simulate commands.
//!
//! Exit status is 0 on success, 1 on a contract or validation error, and 2
//! on a usage error (bad flags, unreadable or malformed config, missing
//! input path).

mod attack;
mod error;
mod grid;
mod inputs;
mod manifest;
mod report;
mod simulate;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use error::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "advface",
    version,
    about = "Smoothness-regularized adversarial patches against face verifiers"
)]
struct Cli {
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Suppress progress lines on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate one adversarial example.
    Attack(attack::Args),
    /// Run the algorithm x black-box x technique grid and write its report.
    Grid(grid::Args),
    /// Physical success rate against the noise budget for noise-only attacks.
    Sweep(sweep::Args),
    /// Rebuild the report of a grid output directory from its cell records.
    Report(report::Args),
    /// Print and capture one image under one condition.
    Simulate(simulate::Args),
}

/// Output directory: the flag, else `$ADVFACE_OUT/<command>`, else
/// `advface-out/<command>`.
pub(crate) fn output_dir(flag: Option<PathBuf>, command: &str) -> PathBuf {
    flag.unwrap_or_else(|| {
        std::env::var_os("ADVFACE_OUT")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("advface-out"))
            .join(command)
    })
}

pub(crate) struct Progress {
    quiet: bool,
}

impl Progress {
    pub(crate) fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("advface: {}", msg.as_ref());
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Contract(format!("cannot start worker pool: {e}")))?;
    }
    let progress = Progress { quiet: cli.quiet };
    match cli.command {
        Command::Attack(a) => attack::run(a, &progress),
        Command::Grid(a) => grid::run(a, &progress),
        Command::Sweep(a) => sweep::run(a, &progress),
        Command::Report(a) => report::run(a, &progress),
        Command::Simulate(a) => simulate::run(a, &progress),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("advface: error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
