use wate::estimators::{estimate, EstimateOptions, EstimatorKind};
use wate::parallel::replicate_rng;
use wate::simulation::{
    cached_true_estimands, generate_dataset, run_study, true_estimands, working_model_specs, MethodRow, Scenario,
    SimulationDesign, SimulationReport, TRUTH_SEED, TRUTH_SIZE,
};
use wate::{fit_outcome, fit_propensity, FitOptions, TargetFunction};

/// `E[π(X)]` under the generator, by 80-point Gauss–Hermite quadrature in an
/// independent script (40 and 60 points agree to all digits shown).
const MEAN_PROPENSITY: f64 = 0.505_820_517_735_17;

/// Population estimands by quadrature; the ATE of model 1 is also
/// `e^{1/2} / sqrt(3/4)` in closed form.
const QUADRATURE_TRUTH: [(Scenario, [f64; 4]); 2] = [
    (Scenario::Exponential, [1.9038, 2.7494, 1.0382, 1.4975]),
    (Scenario::Linear, [0.0, 0.4642, -0.4752, -0.0260]),
];

const LABELS: [&str; 4] = ["ATE", "ATT", "ATC", "ATO"];

#[test]
fn mean_propensity_matches_quadrature() {
    let cf = generate_dataset(Scenario::Linear, 1_000_000, &mut replicate_rng(101, 0));
    let mean = cf.pi_true.iter().sum::<f64>() / cf.pi_true.len() as f64;
    assert!((mean - MEAN_PROPENSITY).abs() < 1e-3, "{mean}");
    let share_treated = cf.observed.n_treated() as f64 / 1e6;
    assert!((share_treated - MEAN_PROPENSITY).abs() < 3e-3);
}

#[test]
fn true_estimands_match_quadrature() {
    for (scenario, want) in QUADRATURE_TRUTH {
        let t = cached_true_estimands(scenario, TRUTH_SIZE, TRUTH_SEED).unwrap();
        for (label, w) in LABELS.iter().zip(want) {
            let (got, se) = (t.get(label).unwrap(), t.se(label).unwrap());
            assert!((got - w).abs() < 3.0 * se + 1e-4, "{scenario} {label}: {got} vs {w} (se {se})");
        }
    }
}

#[test]
fn model_one_truth_matches_reference_values() {
    let t = cached_true_estimands(Scenario::Exponential, TRUTH_SIZE, TRUTH_SEED).unwrap();
    for (label, w) in LABELS.iter().zip([1.90, 2.75, 1.04, 1.50]) {
        let (got, se) = (t.get(label).unwrap(), t.se(label).unwrap());
        assert!((got - w).abs() < 2.0 * se, "{label}: {got} vs {w} (se {se})");
    }
}

#[test]
fn att_and_atc_numerators_recombine_into_ate() {
    let t = true_estimands(Scenario::Exponential, 200_000, &mut replicate_rng(5, 0)).unwrap();
    let cf = generate_dataset(Scenario::Exponential, 200_000, &mut replicate_rng(5, 0));
    let p = cf.pi_true.iter().sum::<f64>() / 200_000.0;
    let recombined = p * t.att + (1.0 - p) * t.atc;
    assert!((recombined - t.ate).abs() < 1e-9, "{recombined} vs {}", t.ate);
}

fn design(scenario: Scenario, n: usize, reps: usize, seed: u64) -> SimulationDesign {
    SimulationDesign::new(scenario, n, reps, seed)
}

fn row(pi: Option<bool>, m: Option<bool>, k: EstimatorKind) -> MethodRow {
    MethodRow::new(k, pi, m)
}

fn study(scenario: Scenario) -> SimulationReport {
    run_study(&design(scenario, 1000, 200, 2019)).unwrap()
}

#[test]
fn rmse_dominates_bias_and_layout_is_complete() {
    let r = study(Scenario::Linear);
    assert_eq!(r.cells.len(), 8 * 4);
    for c in &r.cells {
        if c.defined {
            assert!(c.rmse >= c.bias.abs(), "{c:?}");
            assert_eq!(c.n_ok + c.n_failed, 200);
        } else {
            assert_eq!(c.row.estimator, EstimatorKind::Regression);
            assert_eq!(c.estimand, "ATO");
        }
    }
}

#[test]
fn both_models_correct_is_unbiased() {
    for scenario in [Scenario::Exponential, Scenario::Linear] {
        let r = study(scenario);
        let dr = row(Some(true), Some(true), EstimatorKind::Aipw);
        for label in LABELS {
            let c = r.cell(dr, label).unwrap();
            assert!(c.bias.abs() < 3.0 * c.mc_se, "{scenario} {label}: bias {} mc_se {}", c.bias, c.mc_se);
        }
    }
}

#[test]
fn augmentation_improves_on_weighting() {
    for scenario in [Scenario::Exponential, Scenario::Linear] {
        let r = study(scenario);
        for label in LABELS {
            let a = r.cell(row(Some(true), Some(true), EstimatorKind::Aipw), label).unwrap();
            let i = r.cell(row(Some(true), None, EstimatorKind::IpwNormalized), label).unwrap();
            assert!(a.sd <= 1.05 * i.sd, "{scenario} {label}: {} vs {}", a.sd, i.sd);
        }
    }
}

#[test]
fn overlap_target_bias_under_misspecified_propensity() {
    let dr = row(Some(false), Some(true), EstimatorKind::Aipw);
    let c1 = study(Scenario::Exponential).cell(dr, "ATO").unwrap().clone();
    assert!((0.10..=0.22).contains(&c1.bias), "model 1: {}", c1.bias);
    let c2 = study(Scenario::Linear).cell(dr, "ATO").unwrap().clone();
    assert!(c2.bias.abs() < 0.03, "model 2: {}", c2.bias);
}

/// With π misspecified the overlap weights converge to a different target
/// population, so a small asymptotic bias remains for model 2 and this
/// comparison against Monte Carlo error does not hold at any replication
/// count large enough to resolve it.
#[test]
#[ignore = "asymptotic bias of about 0.018 under a misspecified propensity model"]
fn overlap_target_bias_within_monte_carlo_error_for_model_two() {
    let dr = row(Some(false), Some(true), EstimatorKind::Aipw);
    let r = study(Scenario::Linear);
    let c = r.cell(dr, "ATO").unwrap();
    assert!(c.bias.abs() < 3.0 * c.mc_se, "bias {} mc_se {}", c.bias, c.mc_se);
}

#[test]
fn report_does_not_depend_on_worker_count() {
    let base = design(Scenario::Exponential, 200, 40, 77);
    let one = run_study(&SimulationDesign { workers: 1, ..base.clone() }).unwrap();
    let four = run_study(&SimulationDesign { workers: 4, ..base }).unwrap();
    // undefined cells hold NaN, so compare renderings rather than with `==`
    assert_eq!(format!("{one:?}"), format!("{four:?}"));
    assert_eq!(
        wate::simulation::report::to_csv(&[one]),
        wate::simulation::report::to_csv(&[four])
    );
}

#[test]
fn single_replication_reproduces_direct_pipeline() {
    let d = design(Scenario::Linear, 300, 1, 4242);
    let r = run_study(&d).unwrap();
    let cf = d.replicate_dataset(0);
    let ds = &cf.observed;
    let (pi_spec, m_spec) = working_model_specs(Scenario::Linear, true, false);
    let pi = fit_propensity(ds, &pi_spec, &FitOptions::default()).unwrap().predict(ds.covariates()).unwrap();
    let m = fit_outcome(ds, &m_spec).unwrap().predictions(ds.covariates()).unwrap();
    let direct = estimate(ds, EstimatorKind::Aipw, &TargetFunction::Att, Some(&pi), Some(&m), &EstimateOptions::default())
        .unwrap()
        .value;
    let c = r.cell(row(Some(true), Some(false), EstimatorKind::Aipw), "ATT").unwrap();
    assert_eq!(c.n_ok, 1);
    assert!((c.mean - direct).abs() < 1e-15);
    assert!((c.bias - (direct - r.truth.att)).abs() < 1e-12);
    assert!((c.rmse - c.bias.abs()).abs() < 1e-12);
}

#[test]
fn invalid_designs_are_rejected() {
    assert!(run_study(&design(Scenario::Linear, 10, 5, 1)).is_err());
    assert!(run_study(&design(Scenario::Linear, 100, 0, 1)).is_err());
    let mut d = design(Scenario::Linear, 100, 5, 1);
    d.rows = vec![MethodRow::new(EstimatorKind::Aipw, None, Some(true))];
    assert!(run_study(&d).is_err());
    assert!(Scenario::from_index(3).is_err());
}
