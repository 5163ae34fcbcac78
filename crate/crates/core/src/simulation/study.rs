//! Monte Carlo study: repeated draws, working-model fits, and per-cell bias
//! and RMSE against the true estimands.

use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimateOptions, EstimatorKind};
use crate::glm::{fit_outcome, fit_propensity, FitOptions, OutcomePredictions};
use crate::numeric::{sample_sd, CompensatedSum};
use crate::parallel::{map_indexed, replicate_rng, with_workers};
use crate::simulation::dgp::{cached_true_estimands, generate_dataset, working_model_specs, Scenario, TrueEstimands};
use crate::data::CounterfactualDataset;
use crate::target::TargetFunction;

/// Default sample size for the true estimands.
pub const TRUTH_SIZE: usize = 1_000_000;
/// Seed of the truth draw, independent of the study seed.
pub const TRUTH_SEED: u64 = 20_190_001;

/// One method row: an estimator with its working-model specification.
/// `None` marks a model the estimator does not use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MethodRow {
    pub estimator: EstimatorKind,
    pub correct_pi: Option<bool>,
    pub correct_m: Option<bool>,
}

impl MethodRow {
    pub const fn new(estimator: EstimatorKind, correct_pi: Option<bool>, correct_m: Option<bool>) -> Self {
        Self {
            estimator,
            correct_pi,
            correct_m,
        }
    }

    /// The eight rows of the standard layout: regression (m ✓/✗), IPW (π ✓/✗),
    /// and AIPW/DR over all four combinations.
    pub fn standard() -> Vec<MethodRow> {
        use EstimatorKind::*;
        vec![
            MethodRow::new(Regression, None, Some(true)),
            MethodRow::new(Regression, None, Some(false)),
            MethodRow::new(IpwNormalized, Some(true), None),
            MethodRow::new(IpwNormalized, Some(false), None),
            MethodRow::new(Aipw, Some(true), Some(true)),
            MethodRow::new(Aipw, Some(true), Some(false)),
            MethodRow::new(Aipw, Some(false), Some(true)),
            MethodRow::new(Aipw, Some(false), Some(false)),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationDesign {
    pub scenario: Scenario,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub rows: Vec<MethodRow>,
    pub estimands: Vec<TargetFunction>,
    pub truth_size: usize,
    pub truth_seed: u64,
    pub fit_options: FitOptions,
    pub estimate_options: EstimateOptions,
    /// Worker threads (`0` = rayon default). Does not affect results.
    pub workers: usize,
}

impl SimulationDesign {
    pub fn new(scenario: Scenario, n: usize, replications: usize, seed: u64) -> Self {
        Self {
            scenario,
            n,
            replications,
            seed,
            rows: MethodRow::standard(),
            estimands: vec![TargetFunction::Ate, TargetFunction::Att, TargetFunction::Atc, TargetFunction::Ato],
            truth_size: TRUTH_SIZE,
            truth_seed: TRUTH_SEED,
            fit_options: FitOptions::default(),
            estimate_options: EstimateOptions::default(),
            workers: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 20 {
            return Err(Error::Config(format!("simulation sample size must be at least 20, got {}", self.n)));
        }
        if self.replications < 1 {
            return Err(Error::Config("at least one replication is required".into()));
        }
        if self.rows.is_empty() || self.estimands.is_empty() {
            return Err(Error::Config("at least one method row and one estimand are required".into()));
        }
        for tf in &self.estimands {
            if !matches!(tf, TargetFunction::Ate | TargetFunction::Att | TargetFunction::Atc | TargetFunction::Ato) {
                return Err(Error::Config(format!("no true value available for estimand {tf}")));
            }
        }
        for row in &self.rows {
            let k = row.estimator;
            if k.needs_propensity() && row.correct_pi.is_none() {
                return Err(Error::Config(format!("{k} needs a propensity specification")));
            }
            if k.needs_outcome() && row.correct_m.is_none() {
                return Err(Error::Config(format!("{k} needs an outcome specification")));
            }
        }
        Ok(())
    }

    /// The dataset drawn for replication `index`.
    pub fn replicate_dataset(&self, index: usize) -> CounterfactualDataset {
        generate_dataset(self.scenario, self.n, &mut replicate_rng(self.seed, index as u64))
    }

    /// Whether a row × estimand cell is defined (regression has no π̂, so it
    /// cannot target the ATO).
    pub fn is_defined(&self, row: &MethodRow, tf: &TargetFunction) -> bool {
        match row.estimator {
            EstimatorKind::Regression => !matches!(tf, TargetFunction::Ato),
            EstimatorKind::DrLinearInPi => tf.linear_coefficients().is_some(),
            _ => true,
        }
    }

    fn cells(&self) -> Vec<(MethodRow, TargetFunction)> {
        self.rows
            .iter()
            .flat_map(|r| self.estimands.iter().map(move |t| (*r, t.clone())))
            .collect()
    }
}

/// Per-cell Monte Carlo summary; `None` fields mark undefined cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub row: MethodRow,
    pub estimand: String,
    pub defined: bool,
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    pub rmse: f64,
    /// Sample SD of the estimates.
    pub sd: f64,
    /// Monte Carlo SE of the bias, `sd / √n_ok`.
    pub mc_se: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub scenario: Scenario,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub truth: TrueEstimands,
    pub estimands: Vec<String>,
    pub rows: Vec<MethodRow>,
    pub cells: Vec<CellSummary>,
}

impl SimulationReport {
    pub fn cell(&self, row: MethodRow, estimand: &str) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.row == row && c.estimand == estimand)
    }

    pub fn n_failed(&self) -> usize {
        self.cells.iter().map(|c| c.n_failed).sum()
    }
}

fn fit_pi(ds: &crate::data::ObservationalDataset, design: &SimulationDesign, correct: bool) -> Option<Vec<f64>> {
    let (spec, _) = working_model_specs(design.scenario, correct, false);
    fit_propensity(ds, &spec, &design.fit_options)
        .and_then(|pm| pm.predict(ds.covariates()))
        .ok()
}

fn fit_m(ds: &crate::data::ObservationalDataset, design: &SimulationDesign, correct: bool) -> Option<OutcomePredictions> {
    let (_, spec) = working_model_specs(design.scenario, false, correct);
    fit_outcome(ds, &spec).and_then(|om| om.predictions(ds.covariates())).ok()
}

/// Estimates for every cell of one replication, in cell order.
pub fn replicate_estimates(design: &SimulationDesign, index: usize) -> Vec<Option<f64>> {
    let cf = design.replicate_dataset(index);
    let ds = &cf.observed;
    let uses = |f: fn(&MethodRow) -> Option<bool>, v: bool| design.rows.iter().any(|r| f(r) == Some(v));
    let pi_fit = |v: bool| if uses(|r| r.correct_pi, v) { fit_pi(ds, design, v) } else { None };
    let m_fit = |v: bool| if uses(|r| r.correct_m, v) { fit_m(ds, design, v) } else { None };
    let degenerate = ds.n_treated() == 0 || ds.n_control() == 0;
    let (pi_ok, pi_bad, m_ok, m_bad) = if degenerate {
        (None, None, None, None)
    } else {
        (pi_fit(true), pi_fit(false), m_fit(true), m_fit(false))
    };
    design
        .cells()
        .into_iter()
        .map(|(row, tf)| {
            if !design.is_defined(&row, &tf) || degenerate {
                return None;
            }
            let k = row.estimator;
            let pi = match row.correct_pi {
                Some(true) => pi_ok.as_deref(),
                Some(false) => pi_bad.as_deref(),
                None => None,
            };
            let m = match row.correct_m {
                Some(true) => m_ok.as_ref(),
                Some(false) => m_bad.as_ref(),
                None => None,
            };
            if (k.needs_propensity() && pi.is_none()) || (k.needs_outcome() && m.is_none()) {
                return None;
            }
            // Regression never receives π̂; only the π-free targets are defined.
            let pi = if k == EstimatorKind::Regression { None } else { pi };
            estimate(ds, k, &tf, pi, m, &design.estimate_options).ok().map(|e| e.value)
        })
        .collect()
}

fn summarize(row: MethodRow, estimand: String, defined: bool, truth: f64, values: &[f64], requested: usize) -> CellSummary {
    let n_ok = values.len();
    let n_failed = if defined { requested - n_ok } else { 0 };
    if n_ok == 0 {
        return CellSummary {
            row,
            estimand,
            defined,
            truth,
            mean: f64::NAN,
            bias: f64::NAN,
            rmse: f64::NAN,
            sd: f64::NAN,
            mc_se: f64::NAN,
            n_ok,
            n_failed,
        };
    }
    let mean = values.iter().copied().collect::<CompensatedSum>().value() / n_ok as f64;
    let bias = mean - truth;
    let pop_var = values.iter().map(|v| (v - mean).powi(2)).collect::<CompensatedSum>().value() / n_ok as f64;
    let sd = sample_sd(values);
    CellSummary {
        row,
        estimand,
        defined,
        truth,
        mean,
        bias,
        rmse: (bias * bias + pop_var).sqrt(),
        sd,
        mc_se: sd / (n_ok as f64).sqrt(),
        n_ok,
        n_failed,
    }
}

/// Runs every replication and aggregates bias and RMSE per cell.
pub fn run_study(design: &SimulationDesign) -> Result<SimulationReport> {
    design.validate()?;
    let truth = cached_true_estimands(design.scenario, design.truth_size, design.truth_seed)?;
    let per_rep = with_workers(design.workers, || {
        map_indexed(design.replications, |i| replicate_estimates(design, i))
    })?;
    let cells = design
        .cells()
        .into_iter()
        .enumerate()
        .map(|(j, (row, tf))| {
            let label = tf.label();
            let values: Vec<f64> = per_rep.iter().filter_map(|r| r[j]).collect();
            let t = truth.get(&label).expect("validated estimand");
            summarize(row, label, design.is_defined(&row, &tf), t, &values, design.replications)
        })
        .collect();
    Ok(SimulationReport {
        scenario: design.scenario,
        n: design.n,
        replications: design.replications,
        seed: design.seed,
        truth,
        estimands: design.estimands.iter().map(|t| t.label()).collect(),
        rows: design.rows.clone(),
        cells,
    })
}
