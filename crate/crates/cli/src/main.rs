//! `qrho`: factoring, sequence analysis, circuit simulation and property
//! suites from the command line.
//!
//! Exit codes: 0 on success, 2 when nothing was found or a factorization is
//! partial, 1 on usage or precondition errors.

mod commands;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::{BigInt, BigUint};
use std::path::PathBuf;
use std::process::ExitCode;

use qrho_core::quantum_sim::Stage;

#[derive(Parser, Debug)]
#[command(name = "qrho", version, about = "Integer factoring by period finding")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Output::Text)]
    pub output: Output,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 1 runs everything on the calling thread.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Period-finding backend.
    #[arg(long, global = true, value_enum, default_value_t = BackendChoice::Oracle)]
    pub backend: BackendChoice,
    /// Measurements per period query for the circuit backend.
    #[arg(long, global = true, default_value_t = qrho_core::quantum_sim::DEFAULT_MAX_ATTEMPTS)]
    pub attempts: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Output {
    Text,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BackendChoice {
    /// Exact classical order and period computation.
    Oracle,
    /// Amplitude-exact circuit simulation (small moduli only).
    Circuit,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Complete prime-power factorization.
    Factor {
        #[arg(value_parser = parse_natural)]
        n: BigUint,
        /// Trial division bound.
        #[arg(long, default_value_t = 10_000)]
        trial_bound: u64,
        /// Random restarts per strategy.
        #[arg(long, default_value_t = 16)]
        restarts: usize,
    },
    /// Classical rho with Floyd cycle detection on x^e + c.
    Rho {
        #[arg(long, value_parser = parse_natural)]
        n: BigUint,
        #[arg(long, default_value = "1", allow_hyphen_values = true, value_parser = parse_integer)]
        c: BigInt,
        #[arg(long, default_value_t = 2)]
        e: u32,
        #[arg(long, default_value = "2", value_parser = parse_natural)]
        x0: BigUint,
    },
    /// Period-finding rho over a x^2 + b x + (b^2 - 2b)/(4a).
    Qrho {
        #[arg(long, value_parser = parse_natural)]
        n: BigUint,
        #[arg(long, default_value = "1", value_parser = parse_natural)]
        a: BigUint,
        #[arg(long, default_value = "2", value_parser = parse_natural)]
        b: BigUint,
        #[arg(long, default_value = "2", value_parser = parse_natural)]
        x0: BigUint,
        /// Known multiple of ord(alpha, N), skipping the order query.
        #[arg(long, value_parser = parse_natural)]
        order: Option<BigUint>,
    },
    /// Shor's procedure: gcd(x^(r/2) - 1, N).
    Shor {
        #[arg(long, value_parser = parse_natural)]
        x: BigUint,
        #[arg(long, value_parser = parse_natural)]
        n: BigUint,
    },
    /// Shor's procedure over every small prime divisor of the order.
    Xshor {
        #[arg(long, value_parser = parse_natural)]
        x: BigUint,
        #[arg(long, value_parser = parse_natural)]
        n: BigUint,
    },
    /// Period-finding rho over the powers of a.
    QrhoLinear {
        #[arg(long, value_parser = parse_natural)]
        a: BigUint,
        #[arg(long, value_parser = parse_natural)]
        n: BigUint,
    },
    /// Tail, cycle and collision structure of a sequence modulo N = A B.
    Analyze {
        #[arg(long, value_parser = parse_natural)]
        n: BigUint,
        #[command(flatten)]
        step: StepArgs,
        #[arg(long, default_value = "2", value_parser = parse_natural)]
        x0: BigUint,
    },
    /// Run the period-finding circuit and print its states.
    Simulate {
        #[arg(long, value_parser = parse_natural)]
        n: BigUint,
        #[arg(long, default_value = "1", value_parser = parse_natural)]
        a: BigUint,
        #[arg(long, default_value = "2", value_parser = parse_natural)]
        b: BigUint,
        #[arg(long, default_value = "2", value_parser = parse_natural)]
        x0: BigUint,
        /// Stages whose amplitudes are printed (repeatable).
        #[arg(long = "stage", value_enum)]
        stages: Vec<StageArg>,
        /// Write the full trace of all stages as JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run a property suite.
    Verify {
        suite: String,
        #[arg(long)]
        bound: Option<u64>,
        /// Largest constant c in x^2 + c.
        #[arg(long, default_value_t = 10)]
        c_max: u64,
        /// Random instances for sampled suites.
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
}

/// Either `x^e + c` or the quadratic family with `a`, `b`.
#[derive(Args, Debug, Clone)]
pub struct StepArgs {
    #[arg(long, conflicts_with_all = ["a", "b"])]
    pub e: Option<u32>,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_integer, conflicts_with_all = ["a", "b"])]
    pub c: Option<BigInt>,
    #[arg(long, value_parser = parse_natural)]
    pub a: Option<BigUint>,
    #[arg(long, value_parser = parse_natural, requires = "a")]
    pub b: Option<BigUint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    Psi0,
    Psi1,
    Psi2,
    Psi3,
    Psi4,
    Psi5,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Stage {
        Stage::from_index(s as usize).unwrap()
    }
}

fn parse_natural(s: &str) -> Result<BigUint, String> {
    s.parse::<BigUint>()
        .map_err(|_| format!("{s:?} is not a non-negative decimal integer"))
}

fn parse_integer(s: &str) -> Result<BigInt, String> {
    s.parse::<BigInt>()
        .map_err(|_| format!("{s:?} is not a decimal integer"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    commands::run(cli)
}
