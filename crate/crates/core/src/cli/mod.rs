//! The `qkin` command line.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;

pub mod exit {
    pub const OK: u8 = 0;
    pub const CONFIG: u8 = 1;
    pub const RUNTIME: u8 = 2;
    pub const NEGATIVE_CELLS: u8 = 3;
    pub const CHECK_FAILED: u8 = 4;
}

/// A command that did not succeed: the exit code and a message for stderr.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  invalid configuration or arguments
  2  runtime failure (step budget, domain error, infeasible targets); simulate still writes its summary JSON
  3  scan-phi found negative cells under --assert-positive
  4  check: at least one self-check failed

Environment:
  QKIN_THREADS  worker threads for parallel channel sums (positive integer, default 1)";

#[derive(Debug, Parser)]
#[command(name = "qkin", version, about = "Nonextensive quantum kinetics: master-equation runs, q-equilibria and H_q diagnostics", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the master equation; writes <prefix>.trajectory.csv and <prefix>.summary.json
    Simulate {
        config: PathBuf,
        /// Output prefix (overrides [output] prefix)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve for (alpha, beta) and write <prefix>.equilibrium.json
    Equilibrium {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep phi over a regular 4-D grid; writes <prefix>.csv (negative cells) and <prefix>.json
    ScanPhi {
        /// TOML file with a [scan] table; flags override its values
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "qstar")]
        q_star: Option<f64>,
        #[arg(long)]
        min: Option<f64>,
        #[arg(long)]
        max: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
        /// Exit 3 when any cell is negative
        #[arg(long)]
        assert_positive: bool,
        /// Output prefix (default: phi-scan)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in invariant suite
    Check,
}

fn init_threads() -> Result<(), Failure> {
    let threads = match std::env::var("QKIN_THREADS") {
        Err(std::env::VarError::NotPresent) => 1,
        Err(e) => return Err(Failure::new(exit::CONFIG, format!("QKIN_THREADS: {e}"))),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => {
                return Err(Failure::new(
                    exit::CONFIG,
                    format!("QKIN_THREADS must be a positive integer, got {v:?}"),
                ))
            }
        },
    };
    // a second call in the same process finds the pool already built
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn scan_phi(
    config: Option<PathBuf>,
    q_star: Option<f64>,
    min: Option<f64>,
    max: Option<f64>,
    step: Option<f64>,
    assert_positive: bool,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let doc = config.as_deref().map(commands::load_scan).transpose()?;
    let base = doc.as_ref().map(|d| &d.scan);
    let need = |flag: Option<f64>, from: Option<f64>, name: &str| {
        flag.or(from)
            .ok_or_else(|| Failure::new(exit::CONFIG, format!("scan-phi needs --{name} (or a --config with it)")))
    };
    let scan = config::ScanSection {
        q_star: need(q_star, base.map(|s| s.q_star), "qstar")?,
        min: need(min, base.map(|s| s.min), "min")?,
        max: need(max, base.map(|s| s.max), "max")?,
        step: need(step, base.map(|s| s.step), "step")?,
        assert_positive: assert_positive || base.is_some_and(|s| s.assert_positive),
    };
    let prefix = out
        .or_else(|| doc.as_ref().and_then(|d| d.output.as_ref()).map(|o| o.prefix.clone()))
        .unwrap_or_else(|| PathBuf::from("phi-scan"));
    commands::cmd_scan_phi(&scan, &prefix)
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to stderr.
pub fn run<I, A>(args: I) -> u8
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::CONFIG } else { exit::OK };
        }
    };
    let result = init_threads().and_then(|_| match cli.command {
        Command::Simulate { config, out } => commands::cmd_simulate(&config, out.as_deref()),
        Command::Equilibrium { config, out } => commands::cmd_equilibrium(&config, out.as_deref()),
        Command::ScanPhi {
            config,
            q_star,
            min,
            max,
            step,
            assert_positive,
            out,
        } => scan_phi(config, q_star, min, max, step, assert_positive, out),
        Command::Check => commands::cmd_check(),
    });
    match result {
        Ok(()) => exit::OK,
        Err(f) => {
            eprintln!("qkin: {}", f.message);
            f.code
        }
    }
}
