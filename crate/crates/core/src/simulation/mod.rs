//! Simulation study: data-generating process, true estimands, and the Monte
//! Carlo harness comparing estimators under correct and misspecified working
//! models.

pub mod dgp;
pub mod report;
pub mod study;

pub use dgp::{
    cached_true_estimands, generate_dataset, true_estimands, true_logit, true_propensity, working_model_specs, Scenario,
    TrueEstimands,
};
pub use study::{run_study, CellSummary, MethodRow, SimulationDesign, SimulationReport, TRUTH_SEED, TRUTH_SIZE};
