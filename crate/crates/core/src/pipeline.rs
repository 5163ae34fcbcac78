//! End-to-end estimation on one dataset: fit both working models, optionally
//! truncate the propensity scores, and evaluate every requested
//! estimator × estimand cell.

use std::fmt::Write as _;

use crate::bootstrap::{bootstrap_cells, BootstrapOptions};
use crate::data::ObservationalDataset;
use crate::design::DesignSpec;
use crate::error::{Error, Result};
use crate::estimators::{difference_in_means, estimate, resolve_kind, Diagnostics, EstimateOptions, EstimatorKind, PointEstimate};
use crate::glm::{fit_outcome, fit_propensity, truncate_propensity, FitOptions, OutcomePredictions};
use crate::target::TargetFunction;

#[derive(Debug, Clone)]
pub struct EstimationPipeline {
    pub pi_design: DesignSpec,
    pub m_design: DesignSpec,
    pub estimands: Vec<TargetFunction>,
    pub estimators: Vec<EstimatorKind>,
    /// Percentile bounds `(lower, upper)` applied to `π̂` before weighting.
    pub truncation: Option<(f64, f64)>,
    pub fit_options: FitOptions,
    pub estimate_options: EstimateOptions,
}

/// Outcome of one estimator × estimand cell.
#[derive(Debug, Clone, PartialEq)]
pub enum CellOutcome {
    Estimate(PointEstimate),
    /// The pair is undefined under this pipeline (a "-" cell).
    NotApplicable,
    Failed(String),
}

impl CellOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            CellOutcome::Estimate(e) => Some(e.value),
            _ => None,
        }
    }
}

/// Fitted values shared by all cells.
#[derive(Debug, Clone)]
pub struct FittedValues {
    pub propensity: std::result::Result<Vec<f64>, String>,
    pub outcome: std::result::Result<OutcomePredictions, String>,
}

impl EstimationPipeline {
    pub fn new(pi_design: DesignSpec, m_design: DesignSpec) -> Self {
        Self {
            pi_design,
            m_design,
            estimands: vec![TargetFunction::Ate, TargetFunction::Att, TargetFunction::Atc, TargetFunction::Ato],
            estimators: vec![EstimatorKind::Regression, EstimatorKind::IpwNormalized, EstimatorKind::Aipw],
            truncation: None,
            fit_options: FitOptions::default(),
            estimate_options: EstimateOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.estimands.is_empty() || self.estimators.is_empty() {
            return Err(Error::Config("at least one estimand and one estimator are required".into()));
        }
        if let Some((l, u)) = self.truncation {
            truncate_propensity(&[], l, u)?;
        }
        if self.pi_design.input_dim() != self.m_design.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.pi_design.input_dim(),
                got: self.m_design.input_dim(),
            });
        }
        Ok(())
    }

    /// Cells in report order: estimator-major, then estimand.
    pub fn cells(&self) -> Vec<(EstimatorKind, TargetFunction)> {
        self.estimators
            .iter()
            .flat_map(|k| self.estimands.iter().map(move |t| (*k, t.clone())))
            .collect()
    }

    /// Whether the pair is defined. Regression is given no propensity model,
    /// so it covers `h` that do not depend on π plus the π-free ATT/ATC forms.
    pub fn is_applicable(&self, kind: EstimatorKind, tf: &TargetFunction) -> bool {
        if resolve_kind(kind, tf, &self.estimate_options).is_err() {
            return false;
        }
        match kind {
            EstimatorKind::Regression => {
                !tf.depends_on_propensity() || matches!(tf, TargetFunction::Att | TargetFunction::Atc)
            }
            _ => true,
        }
    }

    fn needs(&self) -> (bool, bool) {
        let mut pi = false;
        let mut m = false;
        for (k, t) in self.cells() {
            if self.is_applicable(k, &t) {
                let eff = resolve_kind(k, &t, &self.estimate_options).unwrap_or(k);
                pi |= eff.needs_propensity();
                m |= eff.needs_outcome();
            }
        }
        (pi, m)
    }

    /// Fits the working models the applicable cells need.
    pub fn fit(&self, ds: &ObservationalDataset) -> FittedValues {
        let (need_pi, need_m) = self.needs();
        let propensity = if need_pi {
            fit_propensity(ds, &self.pi_design, &self.fit_options)
                .and_then(|pm| pm.predict(ds.covariates()))
                .and_then(|pi| match self.truncation {
                    Some((l, u)) => truncate_propensity(&pi, l, u),
                    None => Ok(pi),
                })
                .map_err(|e| format!("propensity model: {e}"))
        } else {
            Err("propensity model not requested".into())
        };
        let outcome = if need_m {
            fit_outcome(ds, &self.m_design)
                .and_then(|om| om.predictions(ds.covariates()))
                .map_err(|e| format!("outcome model: {e}"))
        } else {
            Err("outcome model not requested".into())
        };
        FittedValues { propensity, outcome }
    }

    /// Evaluates every cell on already fitted values.
    pub fn evaluate_fitted(&self, ds: &ObservationalDataset, fitted: &FittedValues) -> Vec<CellOutcome> {
        self.cells()
            .into_iter()
            .map(|(kind, tf)| {
                if !self.is_applicable(kind, &tf) {
                    return CellOutcome::NotApplicable;
                }
                let eff = resolve_kind(kind, &tf, &self.estimate_options).unwrap_or(kind);
                let uses_pi = eff.needs_propensity();
                let pi = match (&fitted.propensity, uses_pi) {
                    (Ok(pi), true) => Some(pi.as_slice()),
                    (Err(e), true) => return CellOutcome::Failed(e.clone()),
                    _ => None,
                };
                let m = match (&fitted.outcome, eff.needs_outcome()) {
                    (Ok(m), true) => Some(m),
                    (Err(e), true) => return CellOutcome::Failed(e.clone()),
                    _ => None,
                };
                match estimate(ds, kind, &tf, pi, m, &self.estimate_options) {
                    Ok(e) => CellOutcome::Estimate(e),
                    Err(e) => CellOutcome::Failed(e.to_string()),
                }
            })
            .collect()
    }

    /// Fits and evaluates every cell.
    pub fn evaluate(&self, ds: &ObservationalDataset) -> Vec<CellOutcome> {
        let fitted = self.fit(ds);
        self.evaluate_fitted(ds, &fitted)
    }

    /// Point estimates, unweighted difference, and optional bootstrap SEs.
    pub fn run(&self, ds: &ObservationalDataset, bootstrap: Option<&BootstrapOptions>) -> Result<EstimationReport> {
        self.validate()?;
        let problems = ds.validate();
        if !problems.is_empty() {
            return Err(Error::InvalidDataset(problems));
        }
        let points = self.evaluate(ds);
        let unweighted_value = difference_in_means(ds)?;
        let mut unweighted = Summary::point(unweighted_value);
        let mut cells: Vec<CellResult> = self
            .cells()
            .into_iter()
            .zip(&points)
            .map(|((kind, tf), outcome)| CellResult::from_point(kind, tf, outcome))
            .collect();

        if let Some(opts) = bootstrap {
            let boot = bootstrap_cells(ds, self, &points, opts)?;
            if let Some(u) = &boot.unweighted {
                unweighted.absorb(u);
            }
            for (cell, b) in cells.iter_mut().zip(&boot.cells) {
                if let Some(b) = b {
                    match b {
                        Ok(s) => cell.absorb(s),
                        Err(e) => {
                            cell.status = CellStatus::Failed(e.to_string());
                        }
                    }
                }
            }
        }

        Ok(EstimationReport {
            n: ds.n(),
            n_treated: ds.n_treated(),
            n_control: ds.n_control(),
            treatment_name: ds.treatment_name().to_string(),
            outcome_name: ds.outcome_name().to_string(),
            pi_design: self.pi_design.to_string(),
            m_design: self.m_design.to_string(),
            truncation: self.truncation,
            estimands: self.estimands.iter().map(|t| t.label()).collect(),
            estimators: self.estimators.clone(),
            bootstrap: bootstrap.map(|b| (b.replicates, b.seed)),
            unweighted,
            cells,
        })
    }
}

/// SE and percentile interval computed from replicate values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Uncertainty {
    pub se: f64,
    /// 95% percentile interval (an extension beyond the SE).
    pub ci: (f64, f64),
    pub replicates_ok: usize,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub value: f64,
    pub uncertainty: Option<Uncertainty>,
}

impl Summary {
    fn point(value: f64) -> Self {
        Self { value, uncertainty: None }
    }

    fn absorb(&mut self, u: &Uncertainty) {
        self.uncertainty = Some(*u);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellStatus {
    Ok,
    NotApplicable,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    /// Estimator as requested.
    pub estimator: EstimatorKind,
    /// Estimator evaluated after routing (e.g. AIPW for ATT → DR form).
    pub evaluated: Option<EstimatorKind>,
    pub estimand: TargetFunction,
    pub status: CellStatus,
    pub value: Option<f64>,
    pub diagnostics: Option<Diagnostics>,
    pub uncertainty: Option<Uncertainty>,
}

impl CellResult {
    fn from_point(kind: EstimatorKind, tf: TargetFunction, outcome: &CellOutcome) -> Self {
        let (status, value, diagnostics, evaluated) = match outcome {
            CellOutcome::Estimate(e) => (CellStatus::Ok, Some(e.value), Some(e.diagnostics), Some(e.estimator)),
            CellOutcome::NotApplicable => (CellStatus::NotApplicable, None, None, None),
            CellOutcome::Failed(msg) => (CellStatus::Failed(msg.clone()), None, None, None),
        };
        Self {
            estimator: kind,
            evaluated,
            estimand: tf,
            status,
            value,
            diagnostics,
            uncertainty: None,
        }
    }

    fn absorb(&mut self, u: &Uncertainty) {
        self.uncertainty = Some(*u);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationReport {
    pub n: usize,
    pub n_treated: usize,
    pub n_control: usize,
    pub treatment_name: String,
    pub outcome_name: String,
    pub pi_design: String,
    pub m_design: String,
    pub truncation: Option<(f64, f64)>,
    pub estimands: Vec<String>,
    pub estimators: Vec<EstimatorKind>,
    /// `(B, seed)` when bootstrap SEs were requested.
    pub bootstrap: Option<(usize, u64)>,
    pub unweighted: Summary,
    pub cells: Vec<CellResult>,
}

fn fmt_num(v: f64) -> String {
    format!("{v:.6}")
}

fn method_label(kind: EstimatorKind) -> &'static str {
    match kind {
        EstimatorKind::Regression => "R",
        EstimatorKind::IpwNormalized => "IPW",
        EstimatorKind::IpwUnnormalized => "IPW (unnormalized)",
        EstimatorKind::Aipw => "AIPW / DR",
        EstimatorKind::DrLinearInPi => "DR",
    }
}

impl EstimationReport {
    pub fn n_failed(&self) -> usize {
        self.cells.iter().filter(|c| matches!(c.status, CellStatus::Failed(_))).count()
    }

    pub fn cell(&self, kind: EstimatorKind, estimand: &str) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.estimator == kind && c.estimand.label() == estimand)
    }

    /// One row per cell plus a leading `unweighted` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,estimand,status,estimate,se,ci_lower,ci_upper,replicates_ok,evaluated,sum_h,ess_treated,ess_control\n");
        let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
        let u = self.unweighted.uncertainty;
        let _ = writeln!(
            out,
            "unweighted,ATE,ok,{},{},{},{},{},,,,",
            fmt_num(self.unweighted.value),
            opt(u.map(|u| u.se)),
            opt(u.map(|u| u.ci.0)),
            opt(u.map(|u| u.ci.1)),
            u.map(|u| u.replicates_ok.to_string()).unwrap_or_default(),
        );
        for c in &self.cells {
            let status = match &c.status {
                CellStatus::Ok => "ok".to_string(),
                CellStatus::NotApplicable => "not-applicable".to_string(),
                CellStatus::Failed(msg) => format!("\"failed: {}\"", msg.replace('"', "'")),
            };
            let u = c.uncertainty;
            let d = c.diagnostics;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                c.estimator.name(),
                c.estimand.label(),
                status,
                opt(c.value),
                opt(u.map(|u| u.se)),
                opt(u.map(|u| u.ci.0)),
                opt(u.map(|u| u.ci.1)),
                u.map(|u| u.replicates_ok.to_string()).unwrap_or_default(),
                c.evaluated.map(|k| k.name()).unwrap_or_default(),
                opt(d.map(|d| d.sum_h)),
                opt(d.and_then(|d| d.ess_treated)),
                opt(d.and_then(|d| d.ess_control)),
            );
        }
        out
    }

    /// Estimate (SE) table with estimators as rows and estimands as columns.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# Weighted treatment effect estimates\n");
        let _ = writeln!(
            out,
            "n = {} ({} treated, {} control); outcome `{}`, treatment `{}`\n",
            self.n, self.n_treated, self.n_control, self.outcome_name, self.treatment_name
        );
        let _ = writeln!(out, "- propensity design: `{}`", self.pi_design);
        let _ = writeln!(out, "- outcome design: `{}` (with treatment interactions)", self.m_design);
        match self.truncation {
            Some((l, u)) => {
                let _ = writeln!(out, "- propensity truncation: percentiles {l}, {u}");
            }
            None => {
                let _ = writeln!(out, "- propensity truncation: none");
            }
        }
        if let Some((b, seed)) = self.bootstrap {
            let _ = writeln!(out, "- bootstrap: B = {b}, seed = {seed}; 95% percentile intervals in the CSV");
        }
        out.push('\n');

        let header: Vec<&str> = self.estimands.iter().map(String::as_str).collect();
        let _ = writeln!(out, "| Method | {} |", header.join(" | "));
        let _ = writeln!(out, "|---|{}", "---|".repeat(header.len()));

        let cell_text = |value: Option<f64>, u: Option<Uncertainty>| match (value, u) {
            (Some(v), Some(u)) => format!("{v:.2} ({:.2})", u.se),
            (Some(v), None) => format!("{v:.2}"),
            _ => "-".to_string(),
        };
        let mut row = vec![cell_text(Some(self.unweighted.value), self.unweighted.uncertainty)];
        row.extend(std::iter::repeat_n("-".to_string(), header.len().saturating_sub(1)));
        let _ = writeln!(out, "| Unweighted | {} |", row.join(" | "));

        for kind in &self.estimators {
            let row: Vec<String> = self
                .estimands
                .iter()
                .map(|e| match self.cell(*kind, e) {
                    Some(c) => match &c.status {
                        CellStatus::Ok => cell_text(c.value, c.uncertainty),
                        CellStatus::NotApplicable => "-".to_string(),
                        CellStatus::Failed(_) => "failed".to_string(),
                    },
                    None => "-".to_string(),
                })
                .collect();
            let _ = writeln!(out, "| {} | {} |", method_label(*kind), row.join(" | "));
        }

        let failures: Vec<String> = self
            .cells
            .iter()
            .filter_map(|c| match &c.status {
                CellStatus::Failed(msg) => Some(format!("- {} / {}: {}", c.estimator.name(), c.estimand.label(), msg)),
                _ => None,
            })
            .collect();
        if !failures.is_empty() {
            let _ = writeln!(out, "\nFailed cells:\n\n{}", failures.join("\n"));
        }
        out
    }
}
