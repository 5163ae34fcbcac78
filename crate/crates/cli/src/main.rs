//! `wate`: weighted average treatment effect estimation and simulation.

mod commands;
mod config;
mod parse;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "wate", version, about = "Weighted average treatment effects: estimation, bootstrap and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate weighted treatment effects on a CSV file.
    Estimate(EstimateArgs),
    /// Run the Monte Carlo study.
    Simulate(SimulateArgs),
    /// Compute the true estimands of the simulation model by large-sample draws.
    TrueValues(TrueValuesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Md,
    Both,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Format as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Flat `key = value` file; command-line flags take precedence.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output path; with `both`, the extension is replaced by .csv and .md.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    /// Input CSV with a header row.
    #[arg(value_name = "CSV")]
    pub input: Option<PathBuf>,
    /// Treatment column (0/1).
    #[arg(long)]
    pub treatment: Option<String>,
    #[arg(long)]
    pub outcome: Option<String>,
    /// Covariate columns, comma separated (default: all other columns).
    #[arg(long)]
    pub covariates: Option<String>,
    /// Estimands: ate, att, atc, ato, linear:A,B, expr:EXPRESSION.
    #[arg(long)]
    pub estimand: Option<String>,
    /// Estimators: regression (r), ipw (i), ipw-unnormalized, aipw (a), dr.
    #[arg(long)]
    pub estimator: Option<String>,
    /// Propensity design, e.g. `x1 + x2^2 + x3*x5` (default: main effects).
    #[arg(long)]
    pub pi_design: Option<String>,
    /// Outcome design, interacted with treatment (default: main effects).
    #[arg(long)]
    pub m_design: Option<String>,
    /// Truncate propensity scores to these percentiles, e.g. `5,95`.
    #[arg(long, value_name = "L,U")]
    pub truncate: Option<String>,
    /// Bootstrap replicates for SEs (0 disables).
    #[arg(long, value_name = "B")]
    pub bootstrap: Option<usize>,
    /// Use the plain augmented estimator for ATT, ATC and linear:A,B instead of their DR forms.
    #[arg(long)]
    pub literal_aipw: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Outcome models, comma separated (1, 2).
    #[arg(long)]
    pub outcome_model: Option<String>,
    /// Sample sizes, comma separated.
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Estimands among ate, att, atc, ato.
    #[arg(long)]
    pub estimand: Option<String>,
    /// Estimators whose method rows to run.
    #[arg(long)]
    pub estimator: Option<String>,
    /// Draws used for the true estimands.
    #[arg(long)]
    pub truth_size: Option<usize>,
    #[arg(long)]
    pub literal_aipw: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TrueValuesArgs {
    /// Outcome models, comma separated (1, 2).
    #[arg(long)]
    pub outcome_model: Option<String>,
    /// Number of counterfactual draws.
    #[arg(long)]
    pub m: Option<usize>,
    #[command(flatten)]
    pub common: CommonArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(a) => commands::estimate(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::TrueValues(a) => commands::true_values(a),
    };
    match result {
        Ok(commands::Status::Complete) => ExitCode::SUCCESS,
        Ok(commands::Status::Partial(n)) => {
            eprintln!("warning: {n} cell(s) could not be computed; see the report");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
