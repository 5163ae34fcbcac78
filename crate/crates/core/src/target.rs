//! Target functions `h(X)` and the balancing weights `w1 = h/π`, `w0 = h/(1−π)`.

use std::fmt;
use std::sync::Arc;

use crate::data::Covariates;
use crate::error::{Error, Result};

pub type CovariateFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// The function `h(X)` that tilts the sample covariate density into the
/// target population.
#[derive(Clone)]
pub enum TargetFunction {
    Ate,
    Att,
    Atc,
    Ato,
    /// `h = a + b·π`.
    LinearInPi { a: f64, b: f64 },
    /// A known, pure, nonnegative function of the covariates.
    KnownCovariateFn { name: String, f: CovariateFn },
}

impl TargetFunction {
    pub fn linear_in_pi(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a * a + b * b == 0.0 {
            return Err(Error::InvalidTarget(format!("linear({a},{b}) needs finite a, b with a² + b² > 0")));
        }
        Ok(TargetFunction::LinearInPi { a, b })
    }

    pub fn known(name: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        TargetFunction::KnownCovariateFn {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    /// Whether evaluating `h` needs propensity scores.
    pub fn depends_on_propensity(&self) -> bool {
        !matches!(self, TargetFunction::Ate | TargetFunction::KnownCovariateFn { .. })
    }

    /// `(a, b)` when `h` is linear in π (ATT, ATC, `LinearInPi`).
    pub fn linear_coefficients(&self) -> Option<(f64, f64)> {
        match self {
            TargetFunction::Att => Some((0.0, 1.0)),
            TargetFunction::Atc => Some((1.0, -1.0)),
            TargetFunction::LinearInPi { a, b } => Some((*a, *b)),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            TargetFunction::Ate => "ATE".into(),
            TargetFunction::Att => "ATT".into(),
            TargetFunction::Atc => "ATC".into(),
            TargetFunction::Ato => "ATO".into(),
            TargetFunction::LinearInPi { a, b } => format!("linear({a},{b})"),
            TargetFunction::KnownCovariateFn { name, .. } => format!("h({name})"),
        }
    }
}

impl fmt::Debug for TargetFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl fmt::Display for TargetFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl PartialEq for TargetFunction {
    fn eq(&self, other: &Self) -> bool {
        use TargetFunction::*;
        match (self, other) {
            (Ate, Ate) | (Att, Att) | (Atc, Atc) | (Ato, Ato) => true,
            (LinearInPi { a, b }, LinearInPi { a: a2, b: b2 }) => a == a2 && b == b2,
            (KnownCovariateFn { f, .. }, KnownCovariateFn { f: g, .. }) => Arc::ptr_eq(f, g),
            _ => false,
        }
    }
}

fn check_pi(pi: &[f64], n: usize) -> Result<()> {
    if pi.len() != n {
        return Err(Error::LengthMismatch {
            what: "propensity scores",
            expected: n,
            got: pi.len(),
        });
    }
    match pi.iter().position(|&p| !(p > 0.0 && p < 1.0)) {
        Some(index) => Err(Error::PropensityOutOfRange { index, value: pi[index] }),
        None => Ok(()),
    }
}

/// Evaluates `h` for every row. Propensity-dependent targets need `pi_hat`.
pub fn evaluate_h(tf: &TargetFunction, x: &Covariates, pi_hat: Option<&[f64]>) -> Result<Vec<f64>> {
    let n = x.nrows();
    let pi = if tf.depends_on_propensity() {
        let pi = pi_hat.ok_or_else(|| Error::PropensityRequired(tf.label()))?;
        check_pi(pi, n)?;
        pi
    } else {
        &[][..]
    };
    let h: Vec<f64> = match tf {
        TargetFunction::Ate => vec![1.0; n],
        TargetFunction::Att => pi.to_vec(),
        TargetFunction::Atc => pi.iter().map(|p| 1.0 - p).collect(),
        TargetFunction::Ato => pi.iter().map(|p| p * (1.0 - p)).collect(),
        TargetFunction::LinearInPi { a, b } => pi.iter().map(|p| a + b * p).collect(),
        TargetFunction::KnownCovariateFn { f, .. } => x.rows().map(|row| f(row)).collect(),
    };
    if let Some(index) = h.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidTargetValue { index, value: h[index] });
    }
    Ok(h)
}

/// Balancing weights for both arms plus the `h` values they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub w1: Vec<f64>,
    pub w0: Vec<f64>,
    pub h_values: Vec<f64>,
}

/// `w1 = h/π̂` and `w0 = h/(1 − π̂)` elementwise.
pub fn compute_weights(tf: &TargetFunction, x: &Covariates, pi_hat: &[f64]) -> Result<WeightVector> {
    check_pi(pi_hat, x.nrows())?;
    let h = evaluate_h(tf, x, Some(pi_hat))?;
    Ok(weights_from_h(h, pi_hat))
}

pub(crate) fn weights_from_h(h: Vec<f64>, pi_hat: &[f64]) -> WeightVector {
    let w1 = h.iter().zip(pi_hat).map(|(h, p)| h / p).collect();
    let w0 = h.iter().zip(pi_hat).map(|(h, p)| h / (1.0 - p)).collect();
    WeightVector { w1, w0, h_values: h }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn x(n: usize) -> Covariates {
        Covariates::unnamed(1, n, (0..n).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn ate_is_all_ones() {
        assert_eq!(evaluate_h(&TargetFunction::Ate, &x(3), None).unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn ato_at_one_half() {
        let h = evaluate_h(&TargetFunction::Ato, &x(4), Some(&[0.5; 4])).unwrap();
        assert_eq!(h, vec![0.25; 4]);
    }

    #[test]
    fn propensity_required() {
        assert!(matches!(
            evaluate_h(&TargetFunction::Att, &x(2), None),
            Err(Error::PropensityRequired(_))
        ));
    }

    #[test]
    fn negative_linear_target_is_an_error() {
        let tf = TargetFunction::linear_in_pi(-0.5, 1.0).unwrap();
        let err = evaluate_h(&tf, &x(2), Some(&[0.9, 0.2])).unwrap_err();
        assert!(matches!(err, Error::InvalidTargetValue { index: 1, .. }));
        assert!(TargetFunction::linear_in_pi(0.0, 0.0).is_err());
    }

    #[test]
    fn known_function_must_be_nonnegative() {
        let tf = TargetFunction::known("x1-1", |r| r[0] - 1.0);
        assert!(evaluate_h(&tf, &x(3), None).is_err());
        let ind = TargetFunction::known("x1>0", |r| f64::from(r[0] > 0.0));
        assert_eq!(evaluate_h(&ind, &x(3), None).unwrap(), vec![0.0, 1.0, 1.0]);
    }

    #[test]
    fn overlap_weights() {
        let w = compute_weights(&TargetFunction::Ato, &x(2), &[0.2, 0.8]).unwrap();
        for (got, want) in w.w1.iter().zip([0.8, 0.2]) {
            assert!((got - want).abs() < 1e-15);
        }
        for (got, want) in w.w0.iter().zip([0.2, 0.8]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn ate_and_att_weights_by_hand() {
        let w = compute_weights(&TargetFunction::Ate, &x(3), &[0.5; 3]).unwrap();
        assert_eq!((w.w1, w.w0), (vec![2.0; 3], vec![2.0; 3]));
        let w = compute_weights(&TargetFunction::Att, &x(2), &[0.25, 0.75]).unwrap();
        assert_eq!(w.w1, vec![1.0, 1.0]);
        assert!((w.w0[0] - 1.0 / 3.0).abs() < 1e-15 && (w.w0[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_propensity() {
        assert!(matches!(
            compute_weights(&TargetFunction::Ate, &x(2), &[0.5, 1.0]),
            Err(Error::PropensityOutOfRange { index: 1, .. })
        ));
    }

    fn all_targets() -> Vec<TargetFunction> {
        vec![
            TargetFunction::Ate,
            TargetFunction::Att,
            TargetFunction::Atc,
            TargetFunction::Ato,
            TargetFunction::linear_in_pi(0.3, 2.0).unwrap(),
            TargetFunction::known("1+x1^2", |r| 1.0 + r[0] * r[0]),
        ]
    }

    proptest! {
        #[test]
        fn weights_reconstruct_h(pi in prop::collection::vec(1e-6f64..(1.0 - 1e-6), 1..40)) {
            let cov = x(pi.len());
            for tf in all_targets() {
                let w = compute_weights(&tf, &cov, &pi).unwrap();
                for (i, &p) in pi.iter().enumerate() {
                    let h = w.h_values[i];
                    let tol = 1e-12 * h.max(1.0);
                    prop_assert!((w.w1[i] * p - h).abs() <= tol);
                    prop_assert!((w.w0[i] * (1.0 - p) - h).abs() <= tol);
                    prop_assert!(w.w1[i] >= 0.0 && w.w0[i] >= 0.0);
                }
            }
        }

        #[test]
        fn overlap_weights_are_bounded(pi in prop::collection::vec(1e-12f64..(1.0 - 1e-12), 1..40)) {
            let w = compute_weights(&TargetFunction::Ato, &x(pi.len()), &pi).unwrap();
            prop_assert!(w.w1.iter().chain(&w.w0).all(|&v| v <= 1.0 + 1e-12));
        }

        #[test]
        fn linear_special_cases(pi in prop::collection::vec(1e-6f64..(1.0 - 1e-6), 1..40)) {
            let cov = x(pi.len());
            let h = |tf: &TargetFunction| evaluate_h(tf, &cov, Some(&pi)).unwrap();
            prop_assert_eq!(h(&TargetFunction::linear_in_pi(0.0, 1.0).unwrap()), h(&TargetFunction::Att));
            prop_assert_eq!(h(&TargetFunction::linear_in_pi(1.0, -1.0).unwrap()), h(&TargetFunction::Atc));
            prop_assert_eq!(h(&TargetFunction::linear_in_pi(1.0, 0.0).unwrap()), h(&TargetFunction::Ate));
        }
    }
}
