//! `qpc-lab`: run the comparison protocol, its attacks and experiment sweeps.
//!
//! Exit codes: 0 success, 1 I/O or internal failure, 2 usage error,
//! 3 protocol run aborted by an eavesdropping check, 4 `verify-state` failed.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qpc_core::analysis::{EveKind, ExperimentKind};
use qpc_core::{AttackKind, Variant};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_ABORTED: u8 = 3;
pub const EXIT_VERIFY_FAILED: u8 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Internal(String),
}

impl From<qpc_core::Error> for CliError {
    fn from(e: qpc_core::Error) -> Self {
        match e {
            qpc_core::Error::Internal(_) => CliError::Internal(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "qpc-lab",
    version,
    about = "Quantum private comparison simulator"
)]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the protocol once and report the verdict.
    Run(RunArgs),
    /// Run a passive or active key-recovery attack.
    Attack(AttackArgs),
    /// Run a seeded Monte-Carlo or exhaustive campaign.
    Sweep(SweepArgs),
    /// Rebuild the carrier state and check its amplitudes and Bell correlation.
    VerifyState(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Format as ValueEnum>::from_str(s, false)
    }
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Write the transcript or report here.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Flat `key = value` file with defaults for any flag of this subcommand.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProtocolArgs {
    /// Bit-length N of both secrets.
    #[arg(long)]
    bits: Option<u32>,
    #[arg(long)]
    variant: Option<Variant>,
    /// Decoy photons per quantum transfer [default: one per payload particle].
    #[arg(long)]
    decoys: Option<usize>,
    /// Highest tolerated decoy error rate [default: 0].
    #[arg(long)]
    threshold: Option<f64>,
    /// Master seed (required).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Alice's secret.
    #[arg(long)]
    x: Option<u64>,
    /// Bob's secret.
    #[arg(long)]
    y: Option<u64>,
    /// `none` or `intercept-resend` on both TP links.
    #[arg(long)]
    eve: Option<EveKind>,
    #[command(flatten)]
    protocol: ProtocolArgs,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    /// `passive` or `active`.
    #[arg(long)]
    kind: Option<AttackKind>,
    #[arg(long)]
    x: Option<u64>,
    #[arg(long)]
    y: Option<u64>,
    #[command(flatten)]
    protocol: ProtocolArgs,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// correctness, passive-attack, active-attack, eve-detection or fixed-false-equal.
    #[arg(long)]
    kind: Option<ExperimentKind>,
    /// Trials per campaign (per difference pattern for fixed-false-equal,
    /// number of seeds with --exhaustive) [default: 1000].
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    eve: Option<EveKind>,
    /// With `--kind correctness`: run every (X, Y) pair instead of random ones.
    #[arg(long)]
    exhaustive: bool,
    #[command(flatten)]
    protocol: ProtocolArgs,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Measurement rounds for the Bell-correlation check.
    #[arg(long, default_value_t = 10_000)]
    rounds: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => commands::run(a),
        Command::Attack(a) => commands::attack(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::VerifyState(a) => commands::verify_state(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            let (msg, code) = match err {
                CliError::Usage(m) => (m, EXIT_USAGE),
                CliError::Io(m) => (m, EXIT_FAILURE),
                CliError::Internal(m) => (format!("internal error: {m}"), EXIT_FAILURE),
            };
            eprintln!("qpc-lab: {msg}");
            ExitCode::from(code)
        }
    }
}
