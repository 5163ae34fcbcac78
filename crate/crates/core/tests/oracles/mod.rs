//! Independent reference computations for tests. Nothing here calls the
//! library's fitting or estimation code.
#![allow(dead_code)]

/// Bernoulli log-likelihood of `eta_i = Σ_j coef_j x_ij` (rows include the intercept).
pub fn logistic_loglik(x: &[Vec<f64>], a: &[f64], coef: &[f64]) -> f64 {
    x.iter()
        .zip(a)
        .map(|(row, &ai)| {
            let eta: f64 = row.iter().zip(coef).map(|(v, c)| v * c).sum();
            ai * eta - (1.0 + eta.exp()).ln()
        })
        .sum()
}

/// Maximizer of the log-likelihood by repeated grid search on a shrinking
/// box centred at the current best point.
pub fn grid_search_logistic(x: &[Vec<f64>], a: &[f64], half_width: f64) -> Vec<f64> {
    let k = x[0].len();
    let mut centre = vec![0.0; k];
    let mut width = half_width;
    let steps = 20i32;
    while width > 1e-7 {
        let mut best = (f64::NEG_INFINITY, centre.clone());
        let total = (2 * steps + 1).pow(k as u32);
        for idx in 0..total {
            let mut rest = idx;
            let mut cand = centre.clone();
            for c in cand.iter_mut() {
                let off = rest % (2 * steps + 1) - steps;
                rest /= 2 * steps + 1;
                *c += width * f64::from(off) / f64::from(steps);
            }
            let ll = logistic_loglik(x, a, &cand);
            if ll > best.0 {
                best = (ll, cand);
            }
        }
        centre = best.1;
        width /= 4.0;
    }
    centre
}

/// Solves `(XᵀX) b = Xᵀy` by Gaussian elimination with partial pivoting.
#[allow(clippy::needless_range_loop)]
pub fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let k = x[0].len();
    let mut m = vec![vec![0.0; k + 1]; k];
    for (row, yi) in x.iter().zip(y) {
        for i in 0..k {
            for j in 0..k {
                m[i][j] += row[i] * row[j];
            }
            m[i][k] += row[i] * yi;
        }
    }
    for col in 0..k {
        let piv = (col..k)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, piv);
        for r in 0..k {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in col..=k {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    (0..k).map(|i| m[i][k] / m[i][i]).collect()
}

/// Term-by-term augmented estimator with plain summation.
pub fn aipw_by_hand(a: &[f64], y: &[f64], pi: &[f64], m0: &[f64], m1: &[f64], h: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..a.len() {
        let t1 = a[i] * y[i] / pi[i] - (a[i] - pi[i]) / pi[i] * m1[i];
        let t0 = (1.0 - a[i]) * y[i] / (1.0 - pi[i]) + (a[i] - pi[i]) / (1.0 - pi[i]) * m0[i];
        num += h[i] * (t1 - t0);
        den += h[i];
    }
    num / den
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Small xorshift generator so oracle instances do not depend on the
/// library's RNG plumbing.
pub struct Xorshift(pub u64);

impl Xorshift {
    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform().max(1e-300);
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }
}

/// One random small instance for estimator identities.
pub struct Instance {
    pub x: Vec<f64>,
    pub a: Vec<f64>,
    pub y: Vec<f64>,
    pub pi: Vec<f64>,
    pub m0: Vec<f64>,
    pub m1: Vec<f64>,
}

/// `n` rows with both arms present and propensities in `[0.05, 0.95]`.
pub fn random_instance(rng: &mut Xorshift, n: usize) -> Instance {
    loop {
        let a: Vec<f64> = (0..n).map(|_| if rng.uniform() < 0.5 { 1.0 } else { 0.0 }).collect();
        let treated = a.iter().filter(|&&v| v == 1.0).count();
        if treated == 0 || treated == n {
            continue;
        }
        return Instance {
            x: (0..n).map(|_| rng.normal()).collect(),
            y: (0..n).map(|_| rng.range(-5.0, 5.0)).collect(),
            pi: (0..n).map(|_| rng.range(0.05, 0.95)).collect(),
            m0: (0..n).map(|_| rng.range(-3.0, 3.0)).collect(),
            m1: (0..n).map(|_| rng.range(-3.0, 3.0)).collect(),
            a,
        };
    }
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
