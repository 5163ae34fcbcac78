//! Point estimators of the weighted average treatment effect
//! `τ_h = E[h(X){Y(1) − Y(0)}] / E[h(X)]`.
//!
//! The low-level functions take fitted values (propensity scores and outcome
//! predictions) rather than model objects so that truncation of `π̂` can sit
//! between fitting and estimation. [`estimate`] dispatches on an
//! [`EstimatorKind`] / [`TargetFunction`] pair:
//!
//! | kind              | needs π̂                         | needs m̂ | estimands                    |
//! |-------------------|---------------------------------|---------|------------------------------|
//! | `Regression`      | only for ATO, `LinearInPi`      | yes     | all                          |
//! | `IpwNormalized`   | yes                             | no      | all                          |
//! | `IpwUnnormalized` | yes                             | no      | all                          |
//! | `Aipw`            | yes                             | yes     | all (π-linear h → DR form)   |
//! | `DrLinearInPi`    | yes                             | yes     | ATT, ATC, `LinearInPi`       |
//!
//! Regression for the ATT and ATC uses the π-free forms
//! `Σ A (Y − m̂0) / Σ A` and `Σ (1 − A)(m̂1 − Y) / Σ (1 − A)`.

use std::fmt;

use crate::data::ObservationalDataset;
use crate::error::{Error, Result};
use crate::glm::OutcomePredictions;
use crate::numeric::sum;
use crate::target::{evaluate_h, weights_from_h, TargetFunction, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    Regression,
    IpwNormalized,
    IpwUnnormalized,
    Aipw,
    DrLinearInPi,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Regression => "regression",
            EstimatorKind::IpwNormalized => "ipw",
            EstimatorKind::IpwUnnormalized => "ipw-unnormalized",
            EstimatorKind::Aipw => "aipw",
            EstimatorKind::DrLinearInPi => "dr",
        }
    }

    pub fn needs_propensity(self) -> bool {
        !matches!(self, EstimatorKind::Regression)
    }

    pub fn needs_outcome(self) -> bool {
        matches!(
            self,
            EstimatorKind::Regression | EstimatorKind::Aipw | EstimatorKind::DrLinearInPi
        )
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    /// Sum of the normalizing weights (Σ h, or Σ (a + bA) for the DR forms).
    pub sum_h: f64,
    /// Kish effective sample size of the treated-arm weights.
    pub ess_treated: Option<f64>,
    pub ess_control: Option<f64>,
}

/// Output of the low-level estimator functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointEstimate {
    pub value: f64,
    /// The estimator actually evaluated, after routing.
    pub estimator: EstimatorKind,
    pub estimand: TargetFunction,
    pub n_used: usize,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EstimateOptions {
    /// Evaluate the plain AIPW form even when `h` depends on π̂, instead of
    /// routing to the doubly robust linear-in-π form.
    pub literal_aipw: bool,
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LengthMismatch { what, expected, got })
    }
}

fn check_propensity(ds: &ObservationalDataset, pi: &[f64]) -> Result<()> {
    check_len("propensity scores", ds.n(), pi.len())?;
    match pi.iter().position(|&p| !(p > 0.0 && p < 1.0)) {
        Some(index) => Err(Error::PropensityOutOfRange { index, value: pi[index] }),
        None => Ok(()),
    }
}

fn check_predictions(ds: &ObservationalDataset, m: &OutcomePredictions) -> Result<()> {
    check_len("m0 predictions", ds.n(), m.m0.len())?;
    check_len("m1 predictions", ds.n(), m.m1.len())
}

fn ess(weights: impl Iterator<Item = f64> + Clone) -> f64 {
    let s = sum(weights.clone());
    let s2 = sum(weights.map(|w| w * w));
    if s2 > 0.0 {
        s * s / s2
    } else {
        0.0
    }
}

fn arm_ess(ds: &ObservationalDataset, w: &WeightVector) -> (Option<f64>, Option<f64>) {
    let a = ds.treatment();
    let t = ess(a.iter().zip(&w.w1).filter(|(a, _)| **a == 1.0).map(|(_, w)| *w));
    let c = ess(a.iter().zip(&w.w0).filter(|(a, _)| **a == 0.0).map(|(_, w)| *w));
    (Some(t), Some(c))
}

fn ratio(num: f64, den: f64, what: &'static str) -> Result<f64> {
    if den > 0.0 {
        Ok(num / den)
    } else {
        Err(Error::ZeroDenominator(what))
    }
}

fn check_h(ds: &ObservationalDataset, h: &[f64]) -> Result<f64> {
    check_len("h values", ds.n(), h.len())?;
    if let Some(index) = h.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidTargetValue { index, value: h[index] });
    }
    Ok(sum(h.iter().copied()))
}

/// Outcome regression: `Σ h (m̂1 − m̂0) / Σ h`.
pub fn estimate_regression(ds: &ObservationalDataset, m: &OutcomePredictions, h: &[f64]) -> Result<Estimate> {
    check_predictions(ds, m)?;
    let sum_h = check_h(ds, h)?;
    let num = sum((0..ds.n()).map(|i| h[i] * (m.m1[i] - m.m0[i])));
    Ok(Estimate {
        value: ratio(num, sum_h, "total h")?,
        diagnostics: Diagnostics {
            sum_h,
            ess_treated: None,
            ess_control: None,
        },
    })
}

/// Regression ATT: `Σ A (Y − m̂0) / Σ A`.
pub fn estimate_regression_att(ds: &ObservationalDataset, m: &OutcomePredictions) -> Result<Estimate> {
    check_predictions(ds, m)?;
    let (a, y) = (ds.treatment(), ds.outcome());
    let den = sum(a.iter().copied());
    let num = sum((0..ds.n()).map(|i| a[i] * (y[i] - m.m0[i])));
    Ok(Estimate {
        value: ratio(num, den, "no treated subjects")?,
        diagnostics: Diagnostics {
            sum_h: den,
            ess_treated: None,
            ess_control: None,
        },
    })
}

/// Regression ATC: `Σ (1 − A)(m̂1 − Y) / Σ (1 − A)`.
pub fn estimate_regression_atc(ds: &ObservationalDataset, m: &OutcomePredictions) -> Result<Estimate> {
    check_predictions(ds, m)?;
    let (a, y) = (ds.treatment(), ds.outcome());
    let den = sum(a.iter().map(|a| 1.0 - a));
    let num = sum((0..ds.n()).map(|i| (1.0 - a[i]) * (m.m1[i] - y[i])));
    Ok(Estimate {
        value: ratio(num, den, "no control subjects")?,
        diagnostics: Diagnostics {
            sum_h: den,
            ess_treated: None,
            ess_control: None,
        },
    })
}

/// IPW with normalized weights: difference of the weighted arm means.
pub fn estimate_ipw_normalized(ds: &ObservationalDataset, w: &WeightVector) -> Result<Estimate> {
    let n = ds.n();
    check_len("w1", n, w.w1.len())?;
    check_len("w0", n, w.w0.len())?;
    let (a, y) = (ds.treatment(), ds.outcome());
    let mass1 = sum((0..n).map(|i| a[i] * w.w1[i]));
    let mass0 = sum((0..n).map(|i| (1.0 - a[i]) * w.w0[i]));
    let mean1 = ratio(sum((0..n).map(|i| a[i] * y[i] * w.w1[i])), mass1, "treated weight mass")?;
    let mean0 = ratio(sum((0..n).map(|i| (1.0 - a[i]) * y[i] * w.w0[i])), mass0, "control weight mass")?;
    let (ess_treated, ess_control) = arm_ess(ds, w);
    Ok(Estimate {
        value: mean1 - mean0,
        diagnostics: Diagnostics {
            sum_h: sum(w.h_values.iter().copied()),
            ess_treated,
            ess_control,
        },
    })
}

/// IPW without normalization: `Σ h {A Y/π̂ − (1 − A) Y/(1 − π̂)} / Σ h`,
/// written through the weights as `Σ (A Y w1 − (1 − A) Y w0) / Σ h`.
pub fn estimate_ipw_unnormalized(ds: &ObservationalDataset, w: &WeightVector) -> Result<Estimate> {
    let n = ds.n();
    check_len("w1", n, w.w1.len())?;
    check_len("w0", n, w.w0.len())?;
    let sum_h = check_h(ds, &w.h_values)?;
    let (a, y) = (ds.treatment(), ds.outcome());
    let num = sum((0..n).map(|i| a[i] * y[i] * w.w1[i] - (1.0 - a[i]) * y[i] * w.w0[i]));
    let (ess_treated, ess_control) = arm_ess(ds, w);
    Ok(Estimate {
        value: ratio(num, sum_h, "total h")?,
        diagnostics: Diagnostics {
            sum_h,
            ess_treated,
            ess_control,
        },
    })
}

/// Augmented IPW with a given `h`:
///
/// `(Σ h)⁻¹ Σ h [ {A Y/π̂ − (A − π̂)/π̂ · m̂1} − {(1 − A) Y/(1 − π̂) + (A − π̂)/(1 − π̂) · m̂0} ]`.
pub fn estimate_aipw(ds: &ObservationalDataset, pi: &[f64], m: &OutcomePredictions, h: &[f64]) -> Result<Estimate> {
    check_propensity(ds, pi)?;
    check_predictions(ds, m)?;
    let sum_h = check_h(ds, h)?;
    let (a, y) = (ds.treatment(), ds.outcome());
    let num = sum((0..ds.n()).map(|i| {
        let (ai, pii) = (a[i], pi[i]);
        let treated = ai * y[i] / pii - (ai - pii) / pii * m.m1[i];
        let control = (1.0 - ai) * y[i] / (1.0 - pii) + (ai - pii) / (1.0 - pii) * m.m0[i];
        h[i] * (treated - control)
    }));
    let w = weights_from_h(h.to_vec(), pi);
    let (ess_treated, ess_control) = arm_ess(ds, &w);
    Ok(Estimate {
        value: ratio(num, sum_h, "total h")?,
        diagnostics: Diagnostics {
            sum_h,
            ess_treated,
            ess_control,
        },
    })
}

/// Doubly robust estimator for `h = a + b·π`:
///
/// `(Σ (a + bA))⁻¹ Σ [ (a + bA)(m̂1 − m̂0) + (a + bπ̂){A/π̂ (Y − m̂1) − (1 − A)/(1 − π̂) (Y − m̂0)} ]`.
pub fn estimate_dr_linear_in_pi(
    ds: &ObservationalDataset,
    pi: &[f64],
    m: &OutcomePredictions,
    a: f64,
    b: f64,
) -> Result<Estimate> {
    if a * a + b * b == 0.0 {
        return Err(Error::InvalidTarget("a² + b² must be positive".into()));
    }
    check_propensity(ds, pi)?;
    check_predictions(ds, m)?;
    let (t, y) = (ds.treatment(), ds.outcome());
    let den = sum(t.iter().map(|ti| a + b * ti));
    let num = sum((0..ds.n()).map(|i| {
        let (ti, pii) = (t[i], pi[i]);
        let regression = (a + b * ti) * (m.m1[i] - m.m0[i]);
        let residual = ti / pii * (y[i] - m.m1[i]) - (1.0 - ti) / (1.0 - pii) * (y[i] - m.m0[i]);
        regression + (a + b * pii) * residual
    }));
    let h: Vec<f64> = pi.iter().map(|p| (a + b * p).max(0.0)).collect();
    let w = weights_from_h(h, pi);
    let (ess_treated, ess_control) = arm_ess(ds, &w);
    Ok(Estimate {
        value: ratio(num, den, "Σ (a + bA)")?,
        diagnostics: Diagnostics {
            sum_h: den,
            ess_treated,
            ess_control,
        },
    })
}

/// Doubly robust ATT:
/// `Σ [A Y − {π̂ (1 − A)/(1 − π̂) · Y + (A − π̂)/(1 − π̂) · m̂0}] / Σ A`.
pub fn estimate_att_dr(ds: &ObservationalDataset, pi: &[f64], m: &OutcomePredictions) -> Result<Estimate> {
    check_propensity(ds, pi)?;
    check_predictions(ds, m)?;
    let (a, y) = (ds.treatment(), ds.outcome());
    let den = sum(a.iter().copied());
    let num = sum((0..ds.n()).map(|i| {
        let (ai, pii) = (a[i], pi[i]);
        ai * y[i] - (pii * (1.0 - ai) / (1.0 - pii) * y[i] + (ai - pii) / (1.0 - pii) * m.m0[i])
    }));
    let w = weights_from_h(pi.to_vec(), pi);
    let (ess_treated, ess_control) = arm_ess(ds, &w);
    Ok(Estimate {
        value: ratio(num, den, "no treated subjects")?,
        diagnostics: Diagnostics {
            sum_h: den,
            ess_treated,
            ess_control,
        },
    })
}

/// Doubly robust ATC:
/// `Σ [{(1 − π̂)/π̂ · A Y − (A − π̂)/π̂ · m̂1} − (1 − A) Y] / Σ (1 − A)`.
pub fn estimate_atc_dr(ds: &ObservationalDataset, pi: &[f64], m: &OutcomePredictions) -> Result<Estimate> {
    check_propensity(ds, pi)?;
    check_predictions(ds, m)?;
    let (a, y) = (ds.treatment(), ds.outcome());
    let den = sum(a.iter().map(|ai| 1.0 - ai));
    let num = sum((0..ds.n()).map(|i| {
        let (ai, pii) = (a[i], pi[i]);
        ((1.0 - pii) / pii * ai * y[i] - (ai - pii) / pii * m.m1[i]) - (1.0 - ai) * y[i]
    }));
    let w = weights_from_h(pi.iter().map(|p| 1.0 - p).collect(), pi);
    let (ess_treated, ess_control) = arm_ess(ds, &w);
    Ok(Estimate {
        value: ratio(num, den, "no control subjects")?,
        diagnostics: Diagnostics {
            sum_h: den,
            ess_treated,
            ess_control,
        },
    })
}

/// Unweighted difference of arm means.
pub fn difference_in_means(ds: &ObservationalDataset) -> Result<f64> {
    let (a, y) = (ds.treatment(), ds.outcome());
    let n1 = sum(a.iter().copied());
    let n0 = ds.n() as f64 - n1;
    let m1 = ratio(sum(a.iter().zip(y).map(|(a, y)| a * y)), n1, "no treated subjects")?;
    let m0 = ratio(sum(a.iter().zip(y).map(|(a, y)| (1.0 - a) * y)), n0, "no control subjects")?;
    Ok(m1 - m0)
}

/// The estimator that [`estimate`] will actually evaluate for this pair.
pub fn resolve_kind(kind: EstimatorKind, tf: &TargetFunction, opts: &EstimateOptions) -> Result<EstimatorKind> {
    match kind {
        EstimatorKind::Aipw if !opts.literal_aipw && tf.linear_coefficients().is_some() => Ok(EstimatorKind::DrLinearInPi),
        EstimatorKind::DrLinearInPi if tf.linear_coefficients().is_none() => Err(Error::InvalidPair {
            kind: kind.name(),
            estimand: tf.label(),
        }),
        k => Ok(k),
    }
}

/// Dispatches an estimator/estimand pair over fitted values.
pub fn estimate(
    ds: &ObservationalDataset,
    kind: EstimatorKind,
    tf: &TargetFunction,
    pi: Option<&[f64]>,
    m: Option<&OutcomePredictions>,
    opts: &EstimateOptions,
) -> Result<PointEstimate> {
    let effective = resolve_kind(kind, tf, opts)?;
    let need_pi = || {
        pi.ok_or(Error::MissingModel {
            kind: kind.name(),
            model: "propensity",
        })
    };
    let need_m = || {
        m.ok_or(Error::MissingModel {
            kind: kind.name(),
            model: "outcome",
        })
    };
    let x = ds.covariates();
    let est = match effective {
        EstimatorKind::Regression => {
            let m = need_m()?;
            match tf {
                TargetFunction::Att => estimate_regression_att(ds, m)?,
                TargetFunction::Atc => estimate_regression_atc(ds, m)?,
                _ => {
                    let pi = if tf.depends_on_propensity() { Some(need_pi()?) } else { None };
                    let h = evaluate_h(tf, x, pi)?;
                    estimate_regression(ds, m, &h)?
                }
            }
        }
        EstimatorKind::IpwNormalized | EstimatorKind::IpwUnnormalized => {
            let pi = need_pi()?;
            check_propensity(ds, pi)?;
            let w = weights_from_h(evaluate_h(tf, x, Some(pi))?, pi);
            if effective == EstimatorKind::IpwNormalized {
                estimate_ipw_normalized(ds, &w)?
            } else {
                estimate_ipw_unnormalized(ds, &w)?
            }
        }
        EstimatorKind::Aipw => {
            let pi = need_pi()?;
            let m = need_m()?;
            let h = evaluate_h(tf, x, Some(pi))?;
            estimate_aipw(ds, pi, m, &h)?
        }
        EstimatorKind::DrLinearInPi => {
            let pi = need_pi()?;
            let m = need_m()?;
            match tf {
                TargetFunction::Att => estimate_att_dr(ds, pi, m)?,
                TargetFunction::Atc => estimate_atc_dr(ds, pi, m)?,
                _ => {
                    let (a, b) = tf.linear_coefficients().expect("checked by resolve_kind");
                    // h must be a valid nonnegative target on this sample
                    evaluate_h(tf, x, Some(pi))?;
                    estimate_dr_linear_in_pi(ds, pi, m, a, b)?
                }
            }
        }
    };
    if !est.value.is_finite() {
        return Err(Error::ZeroDenominator("non-finite estimate"));
    }
    Ok(PointEstimate {
        value: est.value,
        estimator: effective,
        estimand: tf.clone(),
        n_used: ds.n(),
        diagnostics: est.diagnostics,
    })
}
