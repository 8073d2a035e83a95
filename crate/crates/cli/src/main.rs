//! `robsynth`: synthesis, margins, simulation and certification from the command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use robsynth_core::simulator::SimMode;
use robsynth_core::Error;

/// Process exit status plus the message printed to stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub const CERTIFICATION: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const DOMAIN: u8 = 3;

    pub fn config(message: impl Into<String>) -> Self {
        Self { code: Self::CONFIG, message: message.into() }
    }

    pub fn domain(message: impl Into<String>) -> Self {
        Self { code: Self::DOMAIN, message: message.into() }
    }

    pub fn certification(message: impl Into<String>) -> Self {
        Self { code: Self::CERTIFICATION, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidInput(_) | Error::Json(_) | Error::Io(_) => Self::CONFIG,
            _ => Self::DOMAIN,
        };
        Self { code, message: e.to_string() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Case {
    Case1,
    Case2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Algebraic,
    Augmented,
}

impl From<ModeArg> for SimMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Algebraic => SimMode::Algebraic,
            ModeArg::Augmented => SimMode::Augmented,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "robsynth", version, about = "Bounded finite-time feedback for perturbed chains of integrators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Directory for report, CSV and SVG files.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Format of the primary output on stdout.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// Also write SVG plots (needs --out).
    #[arg(long, global = true)]
    pub plot: bool,

    /// Seed for random perturbation families (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Gramians, gain a0, level c and perturbation margin.
    Synth,
    /// Perturbation margin and solvability radius for both mask kinds.
    Delta,
    /// Simulate the closed loop from x0 and certify the run.
    Simulate,
    /// Simulate a family of perturbations.
    Sweep,
    /// Identity, positivity, benchmark and reference-number checks.
    Verify {
        /// Reference numbers to compare against (defaults to the bundled file).
        #[arg(long)]
        expectations: Option<PathBuf>,
        /// Largest state dimension for the identity checks.
        #[arg(long, default_value_t = 8)]
        max_dim: usize,
    },
    /// Two coupled pendulums with unknown spring stiffness (case1) or length (case2).
    Pendulum {
        #[arg(value_enum)]
        case: Case,
        /// Parameter of the reported trajectory: k0 for case1, l for case2.
        #[arg(long)]
        param: Option<f64>,
        #[arg(long, value_enum, default_value = "algebraic")]
        mode: ModeArg,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("robsynth: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
