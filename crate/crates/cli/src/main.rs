//! `tdp`: lower confidence bounds for the number of true discoveries.
//!
//! Exit status: 0 on success, 1 when a computation fails (for example an
//! unattainable calibration target), 2 on invalid input.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tdp_core::effect_size::ThresholdRule;
use tdp_core::stepup::Family;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Compute(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Compute(_) => 1,
            CliError::Input(_) => 2,
        }
    }
}

impl From<tdp_core::Error> for CliError {
    fn from(e: tdp_core::Error) -> Self {
        use tdp_core::Error as E;
        match e {
            E::Unattainable { .. } | E::Size(_) => CliError::Compute(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tdp", version, about = "Lower confidence bounds for the number of true discoveries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Bound the number of true discoveries in a p-value file (columns id,p[,t]).
    Bound(BoundArgs),
    /// Calibrate a critical-vector family for one or more gamma* targets.
    Calibrate(CalibrateArgs),
    /// Run a simulation scenario and write a tidy CSV summary.
    Simulate(SimulateArgs),
    /// Estimate the effect size from t-statistics.
    EstimateTheta(EstimateArgs),
    /// Print the distribution of the number of rejections.
    DistR(DistArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Significance level [default: 0.2].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Random seed for commands that draw random numbers [default: 1].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FamilyArgs {
    /// Critical-vector family: bh, by, aorc or exp [default: bh].
    #[arg(long)]
    pub family: Option<Family>,
    /// Fixed lambda; skips calibration.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Fixed beta for aorc and exp (used with --lambda).
    #[arg(long)]
    pub beta: Option<f64>,
    /// Beta grid for calibration, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub beta_grid: Option<Vec<f64>>,
    /// Choose beta separately for each gamma* target instead of keeping the
    /// beta selected at target 1.
    #[arg(long)]
    pub per_target_beta: bool,
}

#[derive(Debug, Clone, Args)]
pub struct BoundArgs {
    /// P-value CSV with header; columns id, p and optionally t.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub family: FamilyArgs,
    /// Target for gamma* when calibrating [default: 1].
    #[arg(long)]
    pub gamma_target: Option<f64>,
    /// Effect size of the alternatives.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Estimate the effect size with this rule: quantile:w, fixed:c,
    /// bonferroni:a or sidak:a.
    #[arg(long)]
    pub threshold: Option<ThresholdRule>,
    /// File with the t column used for estimation; defaults to --input.
    #[arg(long, requires = "threshold")]
    pub theta_input: Option<PathBuf>,
    /// Subjects per test [default: 50].
    #[arg(long)]
    pub n: Option<u32>,
    /// key=value file supplying alpha, family, gamma_target, theta,
    /// threshold, n, lambda and beta; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    /// Number of hypotheses.
    #[arg(long)]
    pub m: usize,
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub family: FamilyArgs,
    /// Comma-separated gamma* targets.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub gamma_target: Vec<f64>,
    #[arg(long)]
    pub theta: f64,
    #[arg(long, default_value_t = 50)]
    pub n: u32,
    /// Include the search trace in the output.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// key=value scenario file (keys: n, m, m1, theta, theta_assumed, rho,
    /// alpha, replications, methods, gs, seed).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Extra key=value settings applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub theta_assumed: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// One or more numbers of false nulls, comma-separated; calibration is
    /// shared between them.
    #[arg(long, value_delimiter = ',')]
    pub m1: Option<Vec<usize>>,
    #[arg(long)]
    pub replications: Option<usize>,
    /// Methods as family[:target], comma-separated, e.g. bh,aorc:0.95.
    #[arg(long)]
    pub methods: Option<String>,
    /// Leave out the closed-testing baseline.
    #[arg(long)]
    pub no_gs: bool,
    /// Write the summaries as JSON instead of CSV.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    /// P-value CSV with columns id, p, t.
    #[arg(long, conflicts_with = "data", required_unless_present = "data")]
    pub input: Option<PathBuf>,
    /// Raw data CSV: one row per subject, one column per hypothesis.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Split the subjects of --data into estimation and bound groups, Ne,Nb.
    #[arg(long, requires = "data", value_parser = parse_split)]
    pub split: Option<(usize, usize)>,
    /// Where to write the p-values of the bound group (needs --split).
    #[arg(long, requires = "split")]
    pub bound_pvalues: Option<PathBuf>,
    #[arg(long)]
    pub threshold: ThresholdRule,
    /// Subjects per test for --input.
    #[arg(long, default_value_t = 50)]
    pub n: u32,
    /// Rules to try in turn when the selection is empty.
    #[arg(long, value_delimiter = ',')]
    pub fallback: Vec<ThresholdRule>,
    /// With --fallback: replace estimates below --floor-below by --floor.
    #[arg(long, default_value_t = 0.4)]
    pub floor_below: f64,
    #[arg(long, default_value_t = 0.5)]
    pub floor: f64,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct DistArgs {
    #[arg(long)]
    pub m: usize,
    /// Number of hypotheses following the alternative.
    #[arg(long)]
    pub m1: usize,
    /// Explicit critical vector, comma-separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "lambda")]
    pub thresholds: Option<Vec<f64>>,
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long, default_value_t = 0.0)]
    pub theta: f64,
    #[arg(long, default_value_t = 50)]
    pub n: u32,
    /// Write JSON instead of CSV.
    #[arg(long)]
    pub json: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

fn parse_split(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected Ne,Nb")?;
    let parse = |x: &str| x.trim().parse::<usize>().map_err(|_| format!("'{x}' is not a count"));
    Ok((parse(a)?, parse(b)?))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bound(a) => commands::bound(a),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::EstimateTheta(a) => commands::estimate_theta(a),
        Command::DistR(a) => commands::dist_r(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
