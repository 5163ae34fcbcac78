//! Weighted average treatment effects under a common `h(X)`-tilted framework:
//! propensity and outcome working models, balancing weights, regression,
//! IPW, augmented and doubly robust estimators, a pairs bootstrap, and the
//! Monte Carlo study harness used to compare them.

pub mod bootstrap;
pub mod data;
pub mod design;
pub mod error;
pub mod estimators;
pub mod glm;
pub mod numeric;
pub mod parallel;
pub mod pipeline;
pub mod simulation;
pub mod target;

pub use bootstrap::{bootstrap_se, BootstrapOptions, BootstrapResult};
pub use data::{load_csv, ColumnMap, CounterfactualDataset, Covariates, ObservationalDataset, Violation};
pub use design::{DesignSpec, Expr, Term};
pub use error::{Error, Result};
pub use estimators::{estimate, EstimateOptions, EstimatorKind, PointEstimate};
pub use glm::{
    fit_outcome, fit_propensity, predict_outcome, predict_propensity, truncate_propensity, FitOptions,
    OutcomeModel, OutcomePredictions, PropensityModel,
};
pub use pipeline::{CellOutcome, CellResult, CellStatus, EstimationPipeline, EstimationReport};
pub use target::{compute_weights, evaluate_h, TargetFunction, WeightVector};
