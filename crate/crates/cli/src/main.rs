use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod plot;

use commands::CliError;

/// Two-step estimation with a least-squares first step, jackknife bias
/// correction and bootstrap percentile-t inference.
#[derive(Debug, Parser)]
#[command(name = "twostep", version)]
struct Cli {
    /// Worker threads; defaults to the available parallelism. Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate θ with jackknife correction and write an inference report.
    Estimate(EstimateArgs),
    /// Estimate the MTE curve on a grid and write it as CSV (and optionally SVG).
    MteCurve(CurveArgs),
    /// Run the Monte Carlo coverage study.
    Simulate(SimulateArgs),
    /// Print first-step leverage and design-balance diagnostics.
    Diagnostics(DiagnosticsArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// First-step response column (the treatment for MTE models).
    #[arg(long = "r-col")]
    pub r_col: String,
    /// First-step covariates, e.g. `z1..z40,w`.
    #[arg(long = "z-cols")]
    pub z_cols: String,
    /// Do not prepend an intercept column to Z.
    #[arg(long)]
    pub no_intercept: bool,
}

#[derive(Debug, Args)]
pub struct InferenceArgs {
    /// Bootstrap draws; 0 reports normal intervals from the jackknife variance.
    #[arg(long, default_value_t = 500)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// rademacher, webb, or custom:v1@p1,v2@p2,...
    #[arg(long, default_value = "rademacher")]
    pub weights: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum MomentKind {
    /// Least-squares outcome regression on a polynomial in the fitted propensity.
    Mte,
    /// Sample mean of the outcome columns.
    Mean,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub inference: InferenceArgs,
    #[arg(long, value_enum, default_value_t = MomentKind::Mte)]
    pub moment: MomentKind,
    /// Outcome column(s); the MTE model uses exactly one.
    #[arg(long = "y-cols", default_value = "Y")]
    pub y_cols: String,
    /// Covariates X of the outcome regression (MTE model).
    #[arg(long = "x-cols", default_value = "")]
    pub x_cols: String,
    /// Polynomial degree in the propensity (MTE model).
    #[arg(long, default_value_t = 2)]
    pub degree: usize,
    /// Point at which the MTE is reported (MTE model).
    #[arg(long = "eval-a", default_value_t = 0.5)]
    pub eval_a: f64,
    /// JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Plain-text summary path; the summary always goes to stdout too.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub inference: InferenceArgs,
    #[arg(long = "y-col", default_value = "Y")]
    pub y_col: String,
    #[arg(long = "x-cols", default_value = "")]
    pub x_cols: String,
    #[arg(long, default_value_t = 2)]
    pub degree: usize,
    /// `start:stop:step` or a comma list; default 0.01 to 0.99 by 0.01.
    #[arg(long)]
    pub grid: Option<String>,
    /// Clamp fitted propensities into [0, 1] in the second step.
    #[arg(long)]
    pub clamp: bool,
    /// Curve CSV path (columns a, tau_hat, tau_bc, ci_lo, ci_hi).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Starting configuration: full (n = 2000, k = 5, 40, 80, 2000 replications) or smoke.
    #[arg(long)]
    pub preset: Option<String>,
    /// key = value configuration file applied on top of the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Individual overrides, e.g. `--set reps=200`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// CSV table path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Aligned text table path; the table always goes to stdout too.
    #[arg(long)]
    pub text: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnosticsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Print JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Estimate(a) => commands::estimate(&a),
        Command::MteCurve(a) => commands::mte_curve(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Diagnostics(a) => commands::diagnostics(&a),
    }
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
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        if w == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(1);
        }
        builder = builder.num_threads(w);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
