//! `welldist`: dispersion, irrationality profiles and the divergence
//! construction from the command line.
//!
//! Exit codes: 0 ok, 1 a check failed, 2 bad usage or input, 3 the
//! construction stalled.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{parse_count, Format};

#[derive(Parser)]
#[command(name = "welldist", version, about = "Well-distribution certificates on the torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct SourceArgs {
    /// Kronecker direction, comma-separated: golden, sqrt2, sqrt3, liouville,
    /// p/q, cf[a0;a1,...] or decimals.
    #[arg(long, conflicts_with = "input")]
    pub alpha: Option<String>,
    /// Point file: a header `n q`, then `q` lines of `n` decimals in [0,1).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Dimension; must match the source when given.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Args, Clone)]
pub struct OutputArgs {
    /// Output path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Defaults to csv for `.csv` paths, json otherwise.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Subcommand)]
enum Command {
    /// Best-approximation records, Dirichlet check and singularity profile.
    Psi {
        #[command(flatten)]
        source: SourceArgs,
        /// Scan bound T.
        #[arg(long, value_parser = parse_count, default_value = "100000")]
        t: u64,
        /// Threshold separating singular-like from non-singular-like.
        #[arg(long, default_value_t = welldist::irrationality::DEFAULT_THETA)]
        theta: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Anchored dispersion and covering radius of prefixes.
    Disp {
        #[command(flatten)]
        source: SourceArgs,
        /// Prefix lengths: `fib:N`, `a..b` or integers, comma-separated.
        #[arg(long)]
        qs: Option<String>,
        /// Grid resolution for covering radii in dimension two and up.
        #[arg(long, default_value_t = 0.01)]
        resolution: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Witness certificates `q s*(q)^n < C^n`.
    Witness {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long)]
        qs: String,
        #[arg(long, default_value_t = 3.0)]
        c: f64,
        #[arg(long, default_value_t = 0.01)]
        resolution: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Level-by-level construction with its checks and Schmidt bounds.
    Construct {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        params: ConstructArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Record curves over sampled targets, with level statistics from a
    /// replayed construction.
    Liminf {
        #[command(flatten)]
        source: SourceArgs,
        /// Number of sampled targets.
        #[arg(long, default_value_t = 200)]
        etas: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Last checkpoint K.
        #[arg(long, value_parser = parse_count, default_value = "1000000")]
        k: u64,
        /// JSON report written by `construct`; replayed for hit statistics.
        #[arg(long)]
        state: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Args, Clone)]
pub struct ConstructArgs {
    #[arg(long, default_value_t = 3.0)]
    pub c: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    /// `harmonic` or `power:a`.
    #[arg(long, default_value = "harmonic")]
    pub schedule: String,
    #[arg(long, default_value_t = 5)]
    pub levels: usize,
    /// Largest witness candidate.
    #[arg(long, value_parser = parse_count, default_value = "10000000")]
    pub max_q: u64,
    /// Witness candidates; best-approximation denominators when absent.
    #[arg(long)]
    pub qs: Option<String>,
    #[arg(long, default_value_t = 0.01)]
    pub resolution: f64,
}

pub enum Failure {
    Usage(String),
    Check(String),
    Stalled(String),
}

impl From<welldist::Error> for Failure {
    fn from(e: welldist::Error) -> Self {
        use welldist::Error::*;
        match e {
            Stalled { .. } => Failure::Stalled(e.to_string()),
            WitnessViolation { .. } | Internal(_) | QuasiIndependence { .. } => Failure::Check(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

fn threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("WELLDIST_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("WELLDIST_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(e.to_string()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    threads()?;
    match cli.command {
        Command::Psi { source, t, theta, output } => commands::psi(&source, t, theta, &output),
        Command::Disp { source, qs, resolution, output } => commands::disp(&source, qs.as_deref(), resolution, &output),
        Command::Witness { source, qs, c, resolution, output } => {
            commands::witness(&source, &qs, c, resolution, &output)
        }
        Command::Construct { source, params, output } => commands::construct(&source, &params, &output),
        Command::Liminf { source, etas, seed, k, state, output } => {
            commands::liminf(&source, etas, seed, k, state.as_deref(), &output)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("welldist: check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("welldist: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Stalled(msg)) => {
            eprintln!("welldist: {msg}");
            ExitCode::from(3)
        }
    }
}
