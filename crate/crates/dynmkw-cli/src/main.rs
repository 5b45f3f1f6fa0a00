// SPDX-License-Identifier: MIT OR Apache-2.0

//! `dynmkw`: rank-based multiple change-point detection at the command
//! line. Three subcommands: `segment` analyzes a CSV signal, `simulate`
//! benchmarks methods on synthetic scenarios, `calibrate` samples the
//! fixed-boundary null statistic against chi-square quantiles.

#![forbid(unsafe_code)]

mod commands;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "dynmkw",
    version,
    about = "Rank-based multiple change-point detection",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Segment a CSV signal and emit a JSON report.
    Segment(SegmentArgs),
    /// Run a Monte-Carlo benchmark and emit a tidy CSV.
    Simulate(SimulateArgs),
    /// Sample the fixed-boundary null statistic and emit a CSV with
    /// chi-square reference quantiles.
    Calibrate(CalibrateArgs),
}

/// Detection method of the segment command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    /// Rank statistic maximized by dynamic programming.
    Dynmkw,
    /// Gaussian mean-shift cost with the same dynamic program.
    Linear,
    /// Gaussian-kernel cost with the same dynamic program.
    Kernel,
    /// Binary segmentation driven by the rank permutation test.
    Binseg,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Input CSV path; rows are time points, columns are coordinates.
    #[arg(long)]
    pub input: PathBuf,
    /// Detection method.
    #[arg(long, value_enum, default_value_t = MethodArg::Dynmkw)]
    pub method: MethodArg,
    /// Fixed number of segments (>= 1); mutually exclusive with --kmax.
    #[arg(long, conflicts_with = "kmax")]
    pub k: Option<usize>,
    /// Largest number of segments of the unknown-K search (>= 4).
    #[arg(long)]
    pub kmax: Option<usize>,
    /// Smallest admissible segment length.
    #[arg(long, default_value_t = 1)]
    pub min_seg_len: usize,
    /// Significance level of the zero-change gate and of binseg splits.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Permutations per significance test.
    #[arg(long, default_value_t = 999)]
    pub permutations: usize,
    /// Seed of the permutation streams and of the default bandwidth
    /// subsample.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Cap of the relative ridge schedule for the rank covariance;
    /// 0 disables regularization.
    #[arg(long, default_value_t = dynmkw::stat::DEFAULT_RIDGE_BUDGET)]
    pub ridge_budget: f64,
    /// Gaussian kernel bandwidth; kernel method only. Default: median
    /// heuristic on a seeded subsample.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Field delimiter: one ASCII character, or "tab".
    #[arg(long, default_value = ",")]
    pub delimiter: String,
    /// Treat the first row as column labels.
    #[arg(long, default_value_t = false)]
    pub has_header: bool,
    /// Include wall-clock seconds in the report. Off by default so the
    /// same invocation always produces byte-identical output.
    #[arg(long, default_value_t = false)]
    pub timing: bool,
    /// Write the JSON report to this file instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Comma-separated methods to run head to head on shared replicate
    /// streams: dynmkw, linear, kernel, binseg.
    #[arg(long, value_delimiter = ',', default_value = "dynmkw")]
    pub methods: Vec<String>,
    /// Comma-separated SNR grid in dB. Default: 0,2,...,30.
    #[arg(long, value_delimiter = ',')]
    pub snr_db: Option<Vec<f64>>,
    /// Monte-Carlo replications per grid point.
    #[arg(long, default_value_t = 100)]
    pub replications: usize,
    /// Hand every method the true number of changes (excludes binseg).
    #[arg(long, default_value_t = false)]
    pub known_k: bool,
    /// Fraction of rows receiving extra outlier noise.
    #[arg(long, default_value_t = 0.0)]
    pub outlier_rate: f64,
    /// Outlier noise variance excess over the background, in dB.
    #[arg(long, default_value_t = 10.0)]
    pub outlier_excess_db: f64,
    /// Significance level of the gate and of binseg splits.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Permutations per significance test.
    #[arg(long, default_value_t = 199)]
    pub permutations: usize,
    /// Smallest admissible segment length.
    #[arg(long, default_value_t = 1)]
    pub min_seg_len: usize,
    /// Matching tolerance in samples for precision and recall.
    #[arg(long, default_value_t = 1)]
    pub tolerance: usize,
    /// Read the SNR as a power ratio (10 log10) instead of an
    /// amplitude ratio (20 log10).
    #[arg(long, default_value_t = false)]
    pub power_snr: bool,
    /// Base seed of the replicate streams.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the CSV to this file instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Number of time samples per replication.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Dimension of each observation.
    #[arg(long, default_value_t = 1)]
    pub l: usize,
    /// Number of segments cut by equally spaced fixed boundaries.
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Null replications.
    #[arg(long, default_value_t = 1000)]
    pub replications: usize,
    /// Seed of the null noise streams.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the CSV to this file instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // Clap exits 2 on bad flags and 0 on --help/--version.
        Err(e) => e.exit(),
    };
    let result = match &cli.command {
        Command::Segment(args) => commands::cmd_segment(args),
        Command::Simulate(args) => commands::cmd_simulate(args),
        Command::Calibrate(args) => commands::cmd_calibrate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
