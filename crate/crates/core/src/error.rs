use thiserror::Error;

use crate::data::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("column `{0}` not found in header")]
    MissingColumn(String),

    #[error("missing values in rows {}", fmt_rows(.rows))]
    MissingValues { rows: Vec<usize> },

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    NotNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("treatment column must contain only 0 and 1; found {value} in row {row}")]
    NonBinaryTreatment { row: usize, value: f64 },

    #[error("treatment arm {arm} has {count} subject(s); at least 2 are required")]
    DegenerateArm { arm: u8, count: usize },

    #[error("invalid dataset: {}", fmt_violations(.0))]
    InvalidDataset(Vec<Violation>),

    #[error("dimension mismatch: expected {expected} columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("design matrix is rank deficient ({rank} of {cols} columns independent)")]
    RankDeficient { rank: usize, cols: usize },

    #[error(
        "logistic fit did not converge after {iterations} iterations \
         (max |score| = {max_score:.3e}); possible separation"
    )]
    NonConvergence {
        iterations: usize,
        max_score: f64,
        last_alpha: Vec<f64>,
    },

    #[error("invalid percentile bounds ({lower}, {upper})")]
    InvalidPercentiles { lower: f64, upper: f64 },

    #[error("treatment level must be 0 or 1, got {0}")]
    InvalidTreatmentLevel(u8),

    #[error("target function `{0}` needs propensity scores")]
    PropensityRequired(String),

    #[error("target function produced invalid value {value} for subject {index}")]
    InvalidTargetValue { index: usize, value: f64 },

    #[error("invalid target function: {0}")]
    InvalidTarget(String),

    #[error("propensity score {value} for subject {index} is outside (0, 1)")]
    PropensityOutOfRange { index: usize, value: f64 },

    #[error("denominator is zero: {0}")]
    ZeroDenominator(&'static str),

    #[error("{kind} estimator requires a {model} model")]
    MissingModel {
        kind: &'static str,
        model: &'static str,
    },

    #[error("estimator {kind} is not defined for estimand {estimand}")]
    InvalidPair { kind: &'static str, estimand: String },

    #[error("length mismatch: {what} has length {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("expression error: {0}")]
    Expression(String),

    #[error("bootstrap unstable: {failed} of {requested} replicates failed")]
    BootstrapUnstable { failed: usize, requested: usize },

    #[error("invalid configuration: {0}")]
    Config(String),
}

fn fmt_rows(rows: &[usize]) -> String {
    const SHOWN: usize = 20;
    let mut s = rows
        .iter()
        .take(SHOWN)
        .map(|r| r.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    if rows.len() > SHOWN {
        s.push_str(&format!(" and {} more", rows.len() - SHOWN));
    }
    s
}

fn fmt_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}
