//! `fpp` command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 when a precondition or validity gate fails.

mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_GATE: i32 = 2;

pub const SUBCOMMANDS: [&str; 11] = [
    "simulate-mu",
    "simulate-mustar",
    "slab",
    "greedy-diag",
    "certify-upper",
    "certify-lower",
    "certify-shape",
    "find-threshold",
    "saw",
    "rw-overlap",
    "alpha-star",
];

#[derive(Debug, Parser)]
#[command(
    name = "fpp",
    version,
    about = "First-passage percolation simulation and shape certificates"
)]
#[command(args_override_self = true)]
pub struct Cli {
    /// Flat `key = value` file of default flags; flags on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for CSV/JSON artifacts and the run manifest; nothing is written without it.
    #[arg(long, global = true, env = "FPP_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
    /// Worker threads for replicas and grid scans; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineArg {
    Generic,
    ExactGamma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictArg {
    Ball,
    Cube,
    Diamond,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LowerTarget {
    Mu,
    Mustar,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverlapModeArg {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
pub struct SimArgs {
    #[arg(long)]
    pub d: u32,
    #[arg(long, default_value = "exponential:1.0")]
    pub dist: String,
    /// Plane index; defaults depend on the quantity.
    #[arg(long)]
    pub n: Option<u32>,
    #[arg(long, default_value_t = 100)]
    pub replicas: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// First replica index, for farming disjoint replica ranges.
    #[arg(long, default_value_t = 0)]
    pub first_replica: u64,
    /// Settled-vertex cap per replica.
    #[arg(long)]
    pub max_settled: Option<u64>,
    /// Passage-time cap per replica.
    #[arg(long)]
    pub max_time: Option<f64>,
    /// Half-width of the coordinate box searched.
    #[arg(long)]
    pub box_radius: Option<i32>,
    /// `simulate-mu` only: estimate `T(0, n e_1)/n` instead of the hyperplane time.
    #[arg(long)]
    pub point: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
pub struct UpperArgs {
    #[arg(long)]
    pub d: u64,
    #[arg(long, default_value = "exponential:1.0")]
    pub dist: String,
    #[arg(long, value_enum)]
    pub pipeline: Option<PipelineArg>,
    /// Restricts the grid to one `η`; with `--delta` and `--b`, fixes the tuple's `η`.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Upper-bound tuple `δ`; requires `--b`.
    #[arg(long, requires = "b")]
    pub delta: Option<f64>,
    /// Upper-bound tuple `B`; requires `--delta`.
    #[arg(long, requires = "delta")]
    pub b: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
pub struct LowerArgs {
    #[arg(long)]
    pub d: u64,
    #[arg(long, default_value = "exponential:1.0")]
    pub dist: String,
    #[arg(long, value_enum)]
    pub pipeline: Option<PipelineArg>,
    /// Fixed `δ`; scanned over a grid otherwise.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, value_enum, default_value = "both")]
    pub target: LowerTarget,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
pub struct ShapeArgs {
    #[command(flatten)]
    pub upper: UpperArgs,
    /// Fixed `δ` for the `μ(e₁)` lower bound.
    #[arg(long)]
    pub lower_delta: Option<f64>,
    /// Fixed `δ` for the `μ*` lower bound.
    #[arg(long)]
    pub mustar_delta: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
pub struct ThresholdArgs {
    #[arg(long, default_value = "exponential:1.0")]
    pub dist: String,
    #[arg(long, value_enum)]
    pub verdict: VerdictArg,
    #[arg(long, value_enum)]
    pub pipeline: Option<PipelineArg>,
    #[arg(long)]
    pub lower_delta: Option<f64>,
    #[arg(long)]
    pub mustar_delta: Option<f64>,
    /// Restricts the upper-bound grid to one `η`.
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, default_value_t = 10_000_000)]
    pub max_d: u64,
    #[arg(long, default_value_t = 20)]
    pub spot_checks: u32,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
pub struct SawArgs {
    #[arg(long)]
    pub n: u32,
    #[arg(long)]
    pub d: u32,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(args_override_self = true)]
pub struct OverlapArgs {
    #[arg(long)]
    pub p: u32,
    #[arg(long)]
    pub n: u32,
    #[arg(long, value_enum, default_value = "exact")]
    pub mode: OverlapModeArg,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Estimate `μ(e₁)` by `b_n/n` (or `T(0, n e₁)/n` with `--point`).
    SimulateMu(SimArgs),
    /// Estimate `μ*` by the passage time to the plane `Σx = n⌈√d⌉`, scaled by `√d/(n⌈√d⌉)`.
    SimulateMustar(SimArgs),
    /// Mean slab passage time, an upper estimate of `μ(e₁)`.
    Slab(SimArgs),
    /// Greedy diagonal path time, an upper estimate of `μ*`.
    GreedyDiag(SimArgs),
    /// Certified upper bound on `μ(e₁)`.
    CertifyUpper(UpperArgs),
    /// Certified lower bounds on `μ(e₁)` and `μ*`.
    CertifyLower(LowerArgs),
    /// Ball, cube and diamond verdicts at one dimension.
    CertifyShape(ShapeArgs),
    /// Smallest dimension from which a verdict is certified.
    FindThreshold(ThresholdArgs),
    /// Exact self-avoiding walk count and connective-constant checks.
    Saw(SawArgs),
    /// Overlap statistics of random-walk pairs.
    RwOverlap(OverlapArgs),
    /// The root of `coth α = α` and its companion constants.
    AlphaStar,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SimulateMu(_) => "simulate-mu",
            Command::SimulateMustar(_) => "simulate-mustar",
            Command::Slab(_) => "slab",
            Command::GreedyDiag(_) => "greedy-diag",
            Command::CertifyUpper(_) => "certify-upper",
            Command::CertifyLower(_) => "certify-lower",
            Command::CertifyShape(_) => "certify-shape",
            Command::FindThreshold(_) => "find-threshold",
            Command::Saw(_) => "saw",
            Command::RwOverlap(_) => "rw-overlap",
            Command::AlphaStar => "alpha-star",
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run(argv: Vec<String>) -> i32 {
    let argv = match config::expand(argv, &SUBCOMMANDS) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if cli.workers > 0 {
        // Fails only if a pool already exists, in which case that pool is used.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global();
    }
    match commands::execute(&cli) {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("{}", failure.message);
            failure.code
        }
    }
}
