//! `bosefield`: phase diagrams, convergence studies, generating functionals,
//! sampling runs and the verification suite for mean-field bosons in a weak
//! harmonic trap.
//!
//! Exit status: 0 success, 1 usage or I/O error, 2 numerical-contract
//! violation, 3 verification failure.

mod commands;
mod config;
mod output;
mod verify;

use clap::{Args, Parser, Subcommand};
use config::{Params, Resolved};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Numerical(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
        }
    }
}

impl From<bosefield::Error> for CliError {
    fn from(e: bosefield::Error) -> Self {
        use bosefield::Error::*;
        match e {
            Domain(_) | WrongPhase(_) | NotTraceClass(_) => CliError::Usage(e.to_string()),
            Divergence(_) | NoSolution(_) | Truncation(_) | Size(_) | Numerical(_) => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "bosefield", version, about = "Mean-field bosons in a weak harmonic trap")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON file with any of the flag values; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    params: Params,
}

#[derive(Subcommand)]
enum Command {
    /// Phase, r_*, total density and mu_c over a grid of (mu, beta, lambda)
    PhaseDiagram(RunArgs),
    /// Finite-kappa fixed point and partition-function ratios along a kappa list
    Convergence(RunArgs),
    /// Generating functional of the bump test function against its limit
    Genfun(RunArgs),
    /// Metropolis-Hastings draws of the finite point field
    Sample(RunArgs),
    /// Run every registered property check
    Verify(RunArgs),
}

fn resolve(args: RunArgs) -> Result<Resolved, CliError> {
    let params = match &args.config {
        Some(p) => args.params.over(Params::load(p)?),
        None => args.params,
    };
    Resolved::from_params(params)
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::PhaseDiagram(a) => commands::phase_diagram(&resolve(a)?)?,
        Command::Convergence(a) => commands::convergence(&resolve(a)?)?,
        Command::Genfun(a) => commands::genfun(&resolve(a)?)?,
        Command::Sample(a) => commands::sample(&resolve(a)?)?,
        Command::Verify(a) => {
            if !verify::run(&resolve(a)?)? {
                eprintln!("verification failed");
                return Ok(ExitCode::from(3));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(match e {
                CliError::Usage(_) | CliError::Io(_) => 1,
                CliError::Numerical(_) => 2,
            })
        }
    }
}
