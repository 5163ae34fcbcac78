//! Working models: logistic regression for the propensity score and
//! least squares for the conditional outcome mean.

use nalgebra::{DMatrix, DVector};

use crate::data::{Covariates, ObservationalDataset};
use crate::design::DesignSpec;
use crate::error::{Error, Result};
use crate::numeric::{self, expit, quantile_sorted, softplus};

/// Relative tolerance below which an (equilibrated) QR pivot counts as zero.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Convergence threshold on the max absolute log-likelihood score.
    pub tol: f64,
    pub max_iter: usize,
    /// Predicted probabilities are clamped into `[clamp_eps, 1 - clamp_eps]`.
    pub clamp_eps: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
            clamp_eps: 1e-12,
        }
    }
}

/// Column-equilibrated Householder least squares. Returns the coefficient
/// vector, or a rank-deficiency error.
pub(crate) fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let (n, k) = x.shape();
    let norms: Vec<f64> = (0..k).map(|j| x.column(j).norm()).collect();
    if n < k || norms.iter().any(|&s| s == 0.0 || !s.is_finite()) {
        let rank = norms.iter().filter(|&&s| s > 0.0).count().min(n);
        return Err(Error::RankDeficient { rank, cols: k });
    }
    let mut scaled = x.clone();
    for (j, s) in norms.iter().enumerate() {
        scaled.column_mut(j).unscale_mut(*s);
    }
    let qr = scaled.qr();
    let r = qr.r();
    let rank = (0..k).filter(|&j| r[(j, j)].abs() > RANK_TOL).count();
    if rank < k {
        return Err(Error::RankDeficient { rank, cols: k });
    }
    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let head = qty.rows(0, k).into_owned();
    let mut coef = r
        .solve_upper_triangular(&head)
        .ok_or(Error::RankDeficient { rank: k - 1, cols: k })?;
    for (j, s) in norms.iter().enumerate() {
        coef[j] /= s;
    }
    Ok(coef)
}

fn linear_predictor(design: &DesignSpec, coef: &[f64], row: &[f64], buf: &mut Vec<f64>) -> f64 {
    design.eval_terms(row, buf);
    let mut acc = numeric::CompensatedSum::new();
    acc.add(coef[0]);
    for (c, v) in coef[1..].iter().zip(buf.iter()) {
        acc.add(c * v);
    }
    acc.value()
}

/// Fitted logistic model `π(X, α) = expit(α · design(X))`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityModel {
    pub alpha: Vec<f64>,
    pub design: DesignSpec,
    pub converged: bool,
    pub iterations: usize,
    pub clamp_eps: f64,
}

impl PropensityModel {
    pub fn from_coefficients(design: DesignSpec, alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() != design.ncols() {
            return Err(Error::LengthMismatch {
                what: "alpha",
                expected: design.ncols(),
                got: alpha.len(),
            });
        }
        Ok(Self {
            alpha,
            design,
            converged: true,
            iterations: 0,
            clamp_eps: FitOptions::default().clamp_eps,
        })
    }

    pub fn linear_predictor(&self, x: &Covariates) -> Result<Vec<f64>> {
        self.design.check_dim(x)?;
        let mut buf = Vec::new();
        Ok(x.rows().map(|row| linear_predictor(&self.design, &self.alpha, row, &mut buf)).collect())
    }

    /// Clamped fitted probabilities for every row of `x`.
    pub fn predict(&self, x: &Covariates) -> Result<Vec<f64>> {
        predict_propensity(self, x)
    }
}

fn log_likelihood(x: &DMatrix<f64>, a: &[f64], coef: &DVector<f64>) -> f64 {
    let eta = x * coef;
    numeric::sum(eta.iter().zip(a).map(|(&e, &ai)| ai * e - softplus(e)))
}

fn score(x: &DMatrix<f64>, a: &[f64], p: &[f64]) -> Vec<f64> {
    (0..x.ncols())
        .map(|j| numeric::sum(x.column(j).iter().zip(a.iter().zip(p)).map(|(&xij, (&ai, &pi))| xij * (ai - pi))))
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Maximum-likelihood logistic regression by iteratively reweighted least
/// squares with step halving. Converged when the max absolute score is below
/// `opts.tol`; fits that push any linear predictor beyond the clamp range are
/// treated as separation and reported as non-convergence.
pub fn fit_propensity(ds: &ObservationalDataset, design: &DesignSpec, opts: &FitOptions) -> Result<PropensityModel> {
    let x = design.matrix(ds.covariates())?;
    let a = ds.treatment();
    let (n, k) = x.shape();
    // full-rank check up front
    least_squares(&x, &DVector::zeros(n))?;

    let mut coef = DVector::<f64>::zeros(k);
    let mut ll = log_likelihood(&x, a, &coef);
    let separation_eta = numeric::logit(1.0 - opts.clamp_eps);
    let mut iterations = 0;
    let mut max_score;
    loop {
        let eta = &x * &coef;
        let p: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
        let s = score(&x, a, &p);
        max_score = max_abs(&s);
        if max_score < opts.tol {
            let max_eta = eta.iter().fold(0.0f64, |m, e| m.max(e.abs()));
            if max_eta >= separation_eta {
                return Err(Error::NonConvergence {
                    iterations,
                    max_score,
                    last_alpha: coef.iter().copied().collect(),
                });
            }
            return Ok(PropensityModel {
                alpha: coef.iter().copied().collect(),
                design: design.clone(),
                converged: true,
                iterations,
                clamp_eps: opts.clamp_eps,
            });
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        // Newton direction: (X'WX)^{-1} X'(a - p) as weighted least squares
        let w: Vec<f64> = p.iter().map(|&pi| (pi * (1.0 - pi)).max(1e-300)).collect();
        let mut xw = x.clone();
        let mut z = DVector::zeros(n);
        for i in 0..n {
            let sw = w[i].sqrt();
            xw.row_mut(i).scale_mut(sw);
            z[i] = (a[i] - p[i]) / sw;
        }
        let delta = least_squares(&xw, &z)?;

        let slack = 1e-12 * (1.0 + ll.abs());
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = &coef + &delta * t;
            let ll_trial = log_likelihood(&x, a, &trial);
            if ll_trial.is_finite() && ll_trial >= ll - slack {
                coef = trial;
                ll = ll_trial;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(Error::NonConvergence {
        iterations,
        max_score,
        last_alpha: coef.iter().copied().collect(),
    })
}

/// Elementwise inverse-logit of the linear predictor, clamped into
/// `[ε, 1 − ε]` so that inverse weights stay finite.
pub fn predict_propensity(model: &PropensityModel, x: &Covariates) -> Result<Vec<f64>> {
    let eps = model.clamp_eps;
    Ok(model
        .linear_predictor(x)?
        .into_iter()
        .map(|e| expit(e).clamp(eps, 1.0 - eps))
        .collect())
}

/// Clamps `pi` to its `lower_pct`-th and `upper_pct`-th sample percentiles
/// (type-7 interpolation). `(0, 100)` is the identity.
pub fn truncate_propensity(pi: &[f64], lower_pct: f64, upper_pct: f64) -> Result<Vec<f64>> {
    if !(0.0..=100.0).contains(&lower_pct) || !(0.0..=100.0).contains(&upper_pct) || lower_pct >= upper_pct {
        return Err(Error::InvalidPercentiles {
            lower: lower_pct,
            upper: upper_pct,
        });
    }
    if pi.is_empty() {
        return Ok(Vec::new());
    }
    let mut sorted = pi.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = quantile_sorted(&sorted, lower_pct / 100.0);
    let hi = quantile_sorted(&sorted, upper_pct / 100.0);
    Ok(pi.iter().map(|&p| p.clamp(lo, hi)).collect())
}

/// Least-squares conditional mean on the design `[1, T, A, A·T]`, where `T`
/// are the design terms.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeModel {
    pub beta: Vec<f64>,
    pub design: DesignSpec,
    /// `RSS / (n − #coef)`.
    pub residual_variance: f64,
    pub r_squared: f64,
}

/// `m̂_0(X)` and `m̂_1(X)` for every subject.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomePredictions {
    pub m0: Vec<f64>,
    pub m1: Vec<f64>,
}

impl OutcomePredictions {
    /// Identically zero predictions.
    pub fn zeros(n: usize) -> Self {
        Self {
            m0: vec![0.0; n],
            m1: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.m0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m0.is_empty()
    }
}

fn outcome_row(terms: &[f64], a: f64, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    out.extend_from_slice(terms);
    out.push(a);
    out.extend(terms.iter().map(|t| a * t));
}

impl OutcomeModel {
    pub fn n_coefficients(design: &DesignSpec) -> usize {
        2 * design.ncols()
    }

    pub fn from_coefficients(design: DesignSpec, beta: Vec<f64>) -> Result<Self> {
        let k = Self::n_coefficients(&design);
        if beta.len() != k {
            return Err(Error::LengthMismatch {
                what: "beta",
                expected: k,
                got: beta.len(),
            });
        }
        Ok(Self {
            beta,
            design,
            residual_variance: 0.0,
            r_squared: f64::NAN,
        })
    }

    pub fn predict(&self, x: &Covariates, a: u8) -> Result<Vec<f64>> {
        predict_outcome(self, x, a)
    }

    pub fn predictions(&self, x: &Covariates) -> Result<OutcomePredictions> {
        Ok(OutcomePredictions {
            m0: self.predict(x, 0)?,
            m1: self.predict(x, 1)?,
        })
    }
}

/// Ordinary least squares on `[1, T, A, A·T]`.
pub fn fit_outcome(ds: &ObservationalDataset, design: &DesignSpec) -> Result<OutcomeModel> {
    design.check_dim(ds.covariates())?;
    let n = ds.n();
    let k = OutcomeModel::n_coefficients(design);
    let mut x = DMatrix::zeros(n, k);
    let mut terms = Vec::new();
    let mut row = Vec::with_capacity(k);
    for (i, cov) in ds.covariates().rows().enumerate() {
        design.eval_terms(cov, &mut terms);
        outcome_row(&terms, ds.treatment()[i], &mut row);
        for (j, v) in row.iter().enumerate() {
            x[(i, j)] = *v;
        }
    }
    let y = DVector::from_column_slice(ds.outcome());
    let beta = least_squares(&x, &y)?;
    let fitted = &x * &beta;
    let rss = numeric::sum(y.iter().zip(fitted.iter()).map(|(a, b)| (a - b) * (a - b)));
    let ybar = numeric::mean(ds.outcome());
    let tss = numeric::sum(y.iter().map(|v| (v - ybar) * (v - ybar)));
    let dof = n.saturating_sub(k).max(1);
    Ok(OutcomeModel {
        beta: beta.iter().copied().collect(),
        design: design.clone(),
        residual_variance: rss / dof as f64,
        r_squared: if tss > 0.0 { 1.0 - rss / tss } else { 1.0 },
    })
}

/// Fitted mean under the counterfactual treatment level `a` for every row.
pub fn predict_outcome(model: &OutcomeModel, x: &Covariates, a: u8) -> Result<Vec<f64>> {
    if a > 1 {
        return Err(Error::InvalidTreatmentLevel(a));
    }
    model.design.check_dim(x)?;
    let af = f64::from(a);
    let mut terms = Vec::new();
    let mut row = Vec::new();
    Ok(x
        .rows()
        .map(|cov| {
            model.design.eval_terms(cov, &mut terms);
            outcome_row(&terms, af, &mut row);
            numeric::sum(row.iter().zip(&model.beta).map(|(v, b)| v * b))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Covariates;

    fn dataset(x: &[f64], a: &[f64], y: &[f64]) -> ObservationalDataset {
        let cov = Covariates::unnamed(1, x.len(), x.to_vec()).unwrap();
        ObservationalDataset::from_parts(cov, a.to_vec(), y.to_vec()).unwrap()
    }

    #[test]
    fn intercept_only_logit_of_half() {
        let ds = dataset(&[0.0, 1.0, 2.0, 3.0], &[0.0, 1.0, 1.0, 0.0], &[0.0; 4]);
        let m = fit_propensity(&ds, &DesignSpec::intercept_only(1), &FitOptions::default()).unwrap();
        assert!(m.alpha[0].abs() < 1e-12);
        assert!(m.converged);
    }

    #[test]
    fn intercept_only_logit_of_three_quarters() {
        let ds = dataset(&[0.0, 1.0, 2.0, 3.0], &[1.0, 1.0, 1.0, 0.0], &[0.0; 4]);
        let m = fit_propensity(&ds, &DesignSpec::intercept_only(1), &FitOptions::default()).unwrap();
        assert!((m.alpha[0] - 3f64.ln()).abs() < 1e-10);
        let pi = m.predict(ds.covariates()).unwrap();
        assert!(pi.iter().all(|p| (p - 0.75).abs() < 1e-10));
    }

    #[test]
    fn separation_is_reported() {
        let ds = dataset(&[-2.0, -1.0, 1.0, 2.0, 3.0, -3.0], &[0.0, 0.0, 1.0, 1.0, 1.0, 0.0], &[0.0; 6]);
        let err = fit_propensity(&ds, &DesignSpec::main_effects(1), &FitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }), "{err:?}");
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let cov = Covariates::unnamed(2, 4, vec![1.0, 2.0, 2.0, 4.0, 3.0, 6.0, 4.0, 8.0]).unwrap();
        let ds = ObservationalDataset::from_parts(cov, vec![0.0, 1.0, 0.0, 1.0], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let design = DesignSpec::main_effects(2);
        assert!(matches!(
            fit_propensity(&ds, &design, &FitOptions::default()),
            Err(Error::RankDeficient { .. })
        ));
        assert!(matches!(fit_outcome(&ds, &design), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn zero_coefficients_predict_one_half() {
        let m = PropensityModel::from_coefficients(DesignSpec::main_effects(1), vec![0.0, 0.0]).unwrap();
        let x = Covariates::unnamed(1, 3, vec![-5.0, 0.0, 9.0]).unwrap();
        assert_eq!(m.predict(&x).unwrap(), vec![0.5; 3]);
    }

    #[test]
    fn extreme_predictor_is_clamped() {
        let m = PropensityModel::from_coefficients(DesignSpec::main_effects(1), vec![0.0, 1e6]).unwrap();
        let x = Covariates::unnamed(1, 2, vec![1.0, -1.0]).unwrap();
        let p = m.predict(&x).unwrap();
        assert_eq!(p, vec![1.0 - 1e-12, 1e-12]);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn predict_dimension_mismatch() {
        let m = PropensityModel::from_coefficients(DesignSpec::main_effects(2), vec![0.0; 3]).unwrap();
        let x = Covariates::unnamed(1, 2, vec![1.0, -1.0]).unwrap();
        assert!(matches!(m.predict(&x), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn truncation_clamps_to_percentiles() {
        let pi = [0.01, 0.5, 0.99];
        let t = truncate_propensity(&pi, 5.0, 95.0).unwrap();
        let q05 = 0.01 + 0.1 * (0.5 - 0.01);
        let q95 = 0.5 + 0.9 * (0.99 - 0.5);
        assert!((t[0] - q05).abs() < 1e-15 && (t[2] - q95).abs() < 1e-15);
        assert_eq!(t[1], 0.5);
        assert_eq!(truncate_propensity(&pi, 0.0, 100.0).unwrap(), pi);
    }

    #[test]
    fn truncation_rejects_bad_bounds() {
        for (l, u) in [(5.0, 5.0), (-1.0, 50.0), (10.0, 101.0), (60.0, 40.0)] {
            assert!(matches!(
                truncate_propensity(&[0.5], l, u),
                Err(Error::InvalidPercentiles { .. })
            ));
        }
    }

    #[test]
    fn constant_outcome_fit() {
        let ds = dataset(&[0.3, 1.0, -2.0, 4.0, 0.5, 1.5], &[0.0, 1.0, 0.0, 1.0, 1.0, 0.0], &[3.0; 6]);
        let m = fit_outcome(&ds, &DesignSpec::main_effects(1)).unwrap();
        assert!((m.beta[0] - 3.0).abs() < 1e-12);
        assert!(m.beta[1..].iter().all(|b| b.abs() < 1e-12));
    }

    #[test]
    fn exact_linear_outcome_fit() {
        let x = [0.3, 1.0, -2.0, 4.0, 0.5, 1.5];
        let y: Vec<f64> = x.iter().map(|v| 2.0 + v).collect();
        let ds = dataset(&x, &[0.0, 1.0, 0.0, 1.0, 1.0, 0.0], &y);
        let m = fit_outcome(&ds, &DesignSpec::main_effects(1)).unwrap();
        for (b, want) in m.beta.iter().zip([2.0, 1.0, 0.0, 0.0]) {
            assert!((b - want).abs() < 1e-10, "{:?}", m.beta);
        }
        let m0 = m.predict(ds.covariates(), 0).unwrap();
        let m1 = m.predict(ds.covariates(), 1).unwrap();
        for (a, b) in m0.iter().zip(&m1) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(m.residual_variance < 1e-20);
    }

    #[test]
    fn treatment_coefficient_is_the_contrast() {
        let m = OutcomeModel::from_coefficients(DesignSpec::main_effects(1), vec![1.0, 2.0, 1.5, 0.0]).unwrap();
        let x = Covariates::unnamed(1, 3, vec![-1.0, 0.0, 7.0]).unwrap();
        let p = m.predictions(&x).unwrap();
        for (a, b) in p.m1.iter().zip(&p.m0) {
            assert!((a - b - 1.5).abs() < 1e-12);
        }
        assert!(matches!(m.predict(&x, 2), Err(Error::InvalidTreatmentLevel(2))));
    }
}
