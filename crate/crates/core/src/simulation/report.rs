//! CSV and Markdown renderings of study reports.

use std::fmt::Write as _;

use crate::estimators::EstimatorKind;
use crate::simulation::dgp::TrueEstimands;
use crate::simulation::study::{MethodRow, SimulationReport};

fn mark(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "✓",
        Some(false) => "✗",
        None => "-",
    }
}

fn csv_mark(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "correct",
        Some(false) => "misspecified",
        None => "",
    }
}

fn method(row: &MethodRow) -> &'static str {
    match row.estimator {
        EstimatorKind::Regression => "R",
        EstimatorKind::IpwNormalized => "IPW",
        EstimatorKind::IpwUnnormalized => "IPW (unnormalized)",
        EstimatorKind::Aipw => "AIPW / DR",
        EstimatorKind::DrLinearInPi => "DR",
    }
}

pub const CSV_HEADER: &str =
    "outcome_model,n,replications,seed,pi,m,estimator,estimand,truth,mean,bias,rmse,sd,mc_se,n_ok,n_failed";

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        String::new()
    }
}

/// Long-format CSV over any number of reports, one line per defined cell.
pub fn to_csv(reports: &[SimulationReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        for c in r.cells.iter().filter(|c| c.defined) {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.scenario.index(),
                r.n,
                r.replications,
                r.seed,
                csv_mark(c.row.correct_pi),
                csv_mark(c.row.correct_m),
                c.row.estimator.name(),
                c.estimand,
                num(c.truth),
                num(c.mean),
                num(c.bias),
                num(c.rmse),
                num(c.sd),
                num(c.mc_se),
                c.n_ok,
                c.n_failed
            );
        }
    }
    out
}

/// Bias/RMSE table per sample size, one block per report, in the usual
/// π / m / method layout.
pub fn to_markdown(reports: &[SimulationReport]) -> String {
    let mut out = String::new();
    let Some(first) = reports.first() else {
        return out;
    };
    let _ = writeln!(
        out,
        "# Simulation results, {} ({} replications, seed {})\n",
        first.scenario, first.replications, first.seed
    );
    let t = &first.truth;
    let _ = writeln!(
        out,
        "True values (m = {}): ATE {:.4}, ATT {:.4}, ATC {:.4}, ATO {:.4}\n",
        t.sample_size_used, t.ate, t.att, t.atc, t.ato
    );
    for r in reports {
        let _ = writeln!(out, "## n = {}\n", r.n);
        let mut header = String::from("| π | m | Method |");
        let mut rule = String::from("|---|---|---|");
        for e in &r.estimands {
            let _ = write!(header, " {e} Bias | {e} RMSE |");
            rule.push_str("---|---|");
        }
        let _ = writeln!(out, "{header}\n{rule}");
        for row in &r.rows {
            let _ = write!(out, "| {} | {} | {} |", mark(row.correct_pi), mark(row.correct_m), method(row));
            for e in &r.estimands {
                match r.cell(*row, e) {
                    Some(c) if c.defined && c.n_ok > 0 => {
                        let _ = write!(out, " {:.2} | {:.2} |", c.bias, c.rmse);
                    }
                    _ => out.push_str(" - | - |"),
                }
            }
            out.push('\n');
        }
        let failed = r.n_failed();
        if failed > 0 {
            let _ = writeln!(out, "\n{failed} cell-replications dropped after model-fit failures.");
        }
        out.push('\n');
    }
    out
}

/// Values and Monte Carlo SEs, one line per estimand.
pub fn truth_to_text(t: &TrueEstimands) -> String {
    let mut out = String::new();
    for label in ["ATE", "ATT", "ATC", "ATO"] {
        let _ = writeln!(
            out,
            "{label} {:.4} (MC SE {:.4})",
            t.get(label).expect("known label"),
            t.se(label).expect("known label")
        );
    }
    let _ = writeln!(out, "draws {}", t.sample_size_used);
    out
}
