//! The five-covariate data-generating process and its true estimands.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Mutex, OnceLock};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{default_names, CounterfactualDataset, Covariates, ObservationalDataset};
use crate::design::{DesignSpec, Expr, Term};
use crate::error::{Error, Result};
use crate::numeric::{expit, CompensatedSum};
use crate::parallel::replicate_rng;

pub const N_COVARIATES: usize = 5;

/// The two outcome models. Both share the baseline `1 + X2² + X3` and differ
/// in the treatment-effect term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    /// Effect `exp(X1 + 0.5·X3·X5)`.
    Exponential,
    /// Effect `X1 + 0.5·X3·X5`.
    Linear,
}

impl Scenario {
    pub fn from_index(i: u8) -> Result<Self> {
        match i {
            1 => Ok(Scenario::Exponential),
            2 => Ok(Scenario::Linear),
            _ => Err(Error::Config(format!("outcome model must be 1 or 2, got {i}"))),
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Scenario::Exponential => 1,
            Scenario::Linear => 2,
        }
    }

    pub fn effect(self, x: &[f64]) -> f64 {
        let z = x[0] + 0.5 * x[2] * x[4];
        match self {
            Scenario::Exponential => z.exp(),
            Scenario::Linear => z,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "outcome model {}", self.index())
    }
}

/// `logit π(X) = 0.5 + X1 − 0.5·X2² + 0.5·X3·X5`.
pub fn true_logit(x: &[f64]) -> f64 {
    0.5 + x[0] - 0.5 * x[1] * x[1] + 0.5 * x[2] * x[4]
}

pub fn true_propensity(x: &[f64]) -> f64 {
    expit(true_logit(x))
}

/// `E[Y(0) | X] = 1 + X2² + X3`.
pub fn baseline_mean(x: &[f64]) -> f64 {
    1.0 + x[1] * x[1] + x[2]
}

/// Draws `n` subjects: five standard normal covariates, `A ~ Bernoulli(π(X))`,
/// and potential outcomes sharing one standard normal error.
pub fn generate_dataset<R: Rng + ?Sized>(scenario: Scenario, n: usize, rng: &mut R) -> CounterfactualDataset {
    let mut xs = Vec::with_capacity(n * N_COVARIATES);
    let mut a = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut y1 = Vec::with_capacity(n);
    let mut y0 = Vec::with_capacity(n);
    let mut pi = Vec::with_capacity(n);
    let mut row = [0.0; N_COVARIATES];
    for _ in 0..n {
        for v in row.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let p = true_propensity(&row);
        let treated = rng.random::<f64>() < p;
        let eps: f64 = rng.sample(StandardNormal);
        let base = baseline_mean(&row) + eps;
        let outcome1 = base + scenario.effect(&row);
        xs.extend_from_slice(&row);
        pi.push(p);
        y0.push(base);
        y1.push(outcome1);
        a.push(if treated { 1.0 } else { 0.0 });
        y.push(if treated { outcome1 } else { base });
    }
    let cov = Covariates::from_row_major(default_names(N_COVARIATES), n, xs).expect("shape is consistent");
    let observed = ObservationalDataset::from_parts(cov, a, y).expect("lengths are consistent");
    CounterfactualDataset {
        observed,
        y1,
        y0,
        pi_true: pi,
    }
}

/// Population ATE, ATT, ATC and ATO with Monte Carlo standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueEstimands {
    pub ate: f64,
    pub att: f64,
    pub atc: f64,
    pub ato: f64,
    pub se_ate: f64,
    pub se_att: f64,
    pub se_atc: f64,
    pub se_ato: f64,
    pub sample_size_used: usize,
}

impl TrueEstimands {
    /// Value for an estimand label (`ATE`, `ATT`, `ATC`, `ATO`).
    pub fn get(&self, label: &str) -> Option<f64> {
        match label {
            "ATE" => Some(self.ate),
            "ATT" => Some(self.att),
            "ATC" => Some(self.atc),
            "ATO" => Some(self.ato),
            _ => None,
        }
    }

    pub fn se(&self, label: &str) -> Option<f64> {
        match label {
            "ATE" => Some(self.se_ate),
            "ATT" => Some(self.se_att),
            "ATC" => Some(self.se_atc),
            "ATO" => Some(self.se_ato),
            _ => None,
        }
    }
}

/// Ratio `Σ h τ / Σ h` and its delta-method standard error.
fn weighted_ratio(h: &[f64], tau: &[f64]) -> (f64, f64) {
    let sh: CompensatedSum = h.iter().copied().collect();
    let sht: CompensatedSum = h.iter().zip(tau).map(|(h, t)| h * t).collect();
    let r = sht.value() / sh.value();
    let ss: CompensatedSum = h.iter().zip(tau).map(|(h, t)| (h * (t - r)).powi(2)).collect();
    (r, ss.value().sqrt() / sh.value())
}

/// Plugs `m` counterfactual draws into the weighted-effect definition using
/// the true propensity score.
pub fn true_estimands<R: Rng + ?Sized>(scenario: Scenario, m: usize, rng: &mut R) -> Result<TrueEstimands> {
    if m < 2 {
        return Err(Error::Config("true estimands need at least 2 draws".into()));
    }
    let cf = generate_dataset(scenario, m, rng);
    let tau: Vec<f64> = cf.y1.iter().zip(&cf.y0).map(|(a, b)| a - b).collect();
    let pi = &cf.pi_true;
    let ones = vec![1.0; m];
    let one_minus: Vec<f64> = pi.iter().map(|p| 1.0 - p).collect();
    let overlap: Vec<f64> = pi.iter().map(|p| p * (1.0 - p)).collect();
    let (ate, se_ate) = weighted_ratio(&ones, &tau);
    let (att, se_att) = weighted_ratio(pi, &tau);
    let (atc, se_atc) = weighted_ratio(&one_minus, &tau);
    let (ato, se_ato) = weighted_ratio(&overlap, &tau);
    Ok(TrueEstimands {
        ate,
        att,
        atc,
        ato,
        se_ate,
        se_att,
        se_atc,
        se_ato,
        sample_size_used: m,
    })
}

type TruthKey = (Scenario, usize, u64);

fn truth_cache() -> &'static Mutex<HashMap<TruthKey, TrueEstimands>> {
    static CACHE: OnceLock<Mutex<HashMap<TruthKey, TrueEstimands>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// [`true_estimands`] drawn from stream 0 of `seed`, memoized per process.
pub fn cached_true_estimands(scenario: Scenario, m: usize, seed: u64) -> Result<TrueEstimands> {
    let key = (scenario, m, seed);
    if let Some(t) = truth_cache().lock().expect("truth cache poisoned").get(&key) {
        return Ok(*t);
    }
    let t = true_estimands(scenario, m, &mut replicate_rng(seed, 0))?;
    truth_cache().lock().expect("truth cache poisoned").insert(key, t);
    Ok(t)
}

/// Propensity and outcome designs for the four working-model combinations.
///
/// Correct π: `1 + x1 + x2^2 + x3*x5`; misspecified π: main effects.
/// The outcome design `T` enters as `[1, T, A, A·T]`. Correct `T` contains the
/// true baseline and effect columns (`x2^2, x3` plus `exp(x1 + 0.5*x3*x5)` for
/// model 1, `x1, x3*x5` for model 2); misspecified `T` is main effects.
pub fn working_model_specs(scenario: Scenario, correct_pi: bool, correct_m: bool) -> (DesignSpec, DesignSpec) {
    let p = N_COVARIATES;
    let pi = if correct_pi {
        DesignSpec::new(p, vec![Term::identity(0), Term::square(1), Term::product(2, 4)]).expect("valid terms")
    } else {
        DesignSpec::main_effects(p)
    };
    let m = if correct_m {
        let mut terms = vec![Term::square(1), Term::identity(2)];
        match scenario {
            Scenario::Exponential => {
                let z = Expr::Add(
                    Box::new(Expr::col(0)),
                    Box::new(Expr::Mul(
                        Box::new(Expr::Const(0.5)),
                        Box::new(Expr::Mul(Box::new(Expr::col(2)), Box::new(Expr::col(4)))),
                    )),
                );
                terms.push(Term::new("exp(x1 + 0.5*x3*x5)", Expr::Exp(Box::new(z))));
            }
            Scenario::Linear => {
                terms.push(Term::identity(0));
                terms.push(Term::product(2, 4));
            }
        }
        DesignSpec::new(p, terms).expect("valid terms")
    } else {
        DesignSpec::main_effects(p)
    };
    (pi, m)
}
