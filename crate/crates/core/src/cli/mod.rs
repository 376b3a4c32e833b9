//! Command-line front end.
//!
//! Four subcommands (`profile`, `critical`, `classify`, `sweep`) write a
//! CSV table and a JSON document under a common `--out` prefix. A
//! `--config` file of `key = value` lines supplies defaults for any flag.
//! Angles are degrees on the command line and radians everywhere else.
//!
//! Exit codes: 0 success, 2 invalid arguments, 3 solver failure, 4 several
//! separated minima in the angle map, 5 inconclusive classification.

mod commands;
pub mod config;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

pub use commands::{
    ClassifyDocument, CriticalDocument, ProfileDocument, SweepDocument, SweepRow,
};
pub use config::{Provenance, RunConfig};

use crate::evolve::{FrameChoice, SmoothingFamily};

#[derive(Debug, Parser)]
#[command(name = "mcf-expanders", version, about = "Expanding solitons and cone smoothings under mean curvature flow")]
#[command(args_override_self = true)]
pub struct Cli {
    /// `key = value` file of default flag values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[command(args_override_self = true)]
pub enum Command {
    /// Shoot one expander profile.
    Profile(ProfileArgs),
    /// Angle map and critical angle of one-sheeted expanders.
    Critical(CriticalArgs),
    /// Evolve one smoothed cone and classify it.
    Classify(ClassifyArgs),
    /// Classify a range of angles, optionally bisecting for the critical angle.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct ProfileArgs {
    /// Initial neck height `u(0)` of a one-sheeted profile.
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long, default_value_t = 3)]
    pub n: u32,
    /// Abscissa horizon (`y` for one-sheeted, `u` for two-sheeted).
    #[arg(long, default_value_t = 40.0)]
    pub ymax: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long)]
    pub two_sheeted: bool,
    /// Axis height `y(0)` of a two-sheeted profile.
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long, default_value = "profile")]
    pub out: String,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct CriticalArgs {
    #[arg(long)]
    pub n: u32,
    /// Width of the final angle bracket, degrees.
    #[arg(long, default_value_t = 0.01)]
    pub tol_angle: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub c_lo: f64,
    #[arg(long, default_value_t = 1e2)]
    pub c_hi: f64,
    /// Log-spaced guard-scan points.
    #[arg(long, default_value_t = 64)]
    pub grid: usize,
    /// Shifts the interior grid points; 0 gives the midpoint grid.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, default_value = "critical")]
    pub out: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindArg {
    Hyperbola,
    Spline,
}

impl From<KindArg> for SmoothingFamily {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Hyperbola => SmoothingFamily::Hyperbola,
            KindArg::Spline => SmoothingFamily::Spline,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameArg {
    Physical,
    SelfSimilar,
}

impl From<FrameArg> for FrameChoice {
    fn from(f: FrameArg) -> Self {
        match f {
            FrameArg::Physical => FrameChoice::Physical,
            FrameArg::SelfSimilar => FrameChoice::SelfSimilar,
        }
    }
}

/// Flags shared by `classify` and `sweep`.
#[derive(Debug, Clone, Args, Serialize)]
pub struct SolverArgs {
    /// Smoothing scale: `δ` for the hyperbola, the window half-width for the spline.
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    #[arg(long, value_enum, default_value_t = KindArg::Hyperbola)]
    pub kind: KindArg,
    #[arg(long, default_value_t = 3)]
    pub n: u32,
    /// Domain half-width `Y`; defaults to `20·max(1, cot α)·max(1, u(0))`.
    #[arg(long)]
    pub half_width: Option<f64>,
    /// Grid spacing in units of the tip height.
    #[arg(long, default_value_t = 0.02)]
    pub spacing: f64,
    /// Physical time horizon; defaults to `1e6·u(0)²`.
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Target relative height change per step.
    #[arg(long, default_value_t = 1e-2)]
    pub rel_change: f64,
    /// Pinch floor as a fraction of the tip height.
    #[arg(long, default_value_t = 1e-3)]
    pub pinch_floor: f64,
    /// Skip the expander barrier certificate.
    #[arg(long)]
    pub no_barrier: bool,
    #[arg(long, value_enum, default_value_t = FrameArg::SelfSimilar)]
    pub frame: FrameArg,
    /// Refined retries of an undecided run.
    #[arg(long, default_value_t = 2)]
    pub refinements: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub alpha_deg: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Long-format `(t, y, u)` snapshot CSV.
    #[arg(long, value_name = "FILE")]
    pub snapshots: Option<String>,
    /// Accepted steps between snapshots.
    #[arg(long, default_value_t = 50)]
    pub cadence: usize,
    #[arg(long, default_value = "classify")]
    pub out: String,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 50.0)]
    pub alpha_min: f64,
    #[arg(long, default_value_t = 80.0)]
    pub alpha_max: f64,
    /// Grid step in degrees; without `--bisect` the grid is always probed.
    #[arg(long)]
    pub step: Option<f64>,
    /// Bisect between `--alpha-min` and `--alpha-max`.
    #[arg(long)]
    pub bisect: bool,
    /// Bisection stopping width, degrees (at least 0.25).
    #[arg(long, default_value_t = 0.25)]
    pub tol_angle: f64,
    /// Skip re-running the final bracket with a doubled half-width.
    #[arg(long)]
    pub no_width_check: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value = "sweep")]
    pub out: String,
}

/// Failure classes and their exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    InvalidArguments,
    SolverFailure,
    MultipleMinima,
    Inconclusive,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::InvalidArguments => 2,
            ErrorKind::SolverFailure => 3,
            ErrorKind::MultipleMinima => 4,
            ErrorKind::Inconclusive => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    pub error: ErrorKind,
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            error: kind,
            message: message.into(),
            exit_code: kind.exit_code(),
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::InvalidArguments, message)
    }

    pub fn solver(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::SolverFailure, message)
    }

    fn report(&self) {
        eprintln!(
            "{}",
            serde_json::to_string(self).unwrap_or_else(|_| self.message.clone())
        );
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::solver(format!("i/o: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::solver(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::solver(format!("json: {e}"))
    }
}

/// Parse `std::env::args` and run; returns the process exit code.
pub fn run() -> i32 {
    run_from(std::env::args().collect())
}

pub fn run_from(args: Vec<String>) -> i32 {
    let (args, config_file) = match config::merge_config(args) {
        Ok(v) => v,
        Err(e) => {
            e.report();
            return e.exit_code;
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let err = CliError::invalid(e.to_string().trim().to_string());
            err.report();
            return err.exit_code;
        }
    };
    let cfg = config_file.as_deref();
    let result = match &cli.command {
        Command::Profile(a) => commands::profile(a, cfg),
        Command::Critical(a) => commands::critical(a, cfg),
        Command::Classify(a) => commands::classify(a, cfg),
        Command::Sweep(a) => commands::sweep(a, cfg),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            e.report();
            e.exit_code
        }
    }
}
