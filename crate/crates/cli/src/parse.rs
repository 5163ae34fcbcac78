//! Parsers for list-valued flags.

use anyhow::{anyhow, bail, Context, Result};
use wate::{EstimatorKind, Expr, TargetFunction};

pub fn estimands(src: &str, names: &[String]) -> Result<Vec<TargetFunction>> {
    let mut out = Vec::new();
    let mut parts = src.split(',').map(str::trim).filter(|s| !s.is_empty());
    while let Some(tok) = parts.next() {
        let lower = tok.to_ascii_lowercase();
        let tf = match lower.as_str() {
            "ate" => TargetFunction::Ate,
            "att" => TargetFunction::Att,
            "atc" => TargetFunction::Atc,
            "ato" => TargetFunction::Ato,
            _ if lower.starts_with("linear:") => {
                let a = &tok["linear:".len()..];
                let b = parts.next().ok_or_else(|| anyhow!("`{tok}` needs two coefficients: linear:A,B"))?;
                let a: f64 = a.trim().parse().with_context(|| format!("linear coefficient `{a}`"))?;
                let b: f64 = b.parse().with_context(|| format!("linear coefficient `{b}`"))?;
                TargetFunction::linear_in_pi(a, b)?
            }
            _ if lower.starts_with("expr:") => {
                let body = tok["expr:".len()..].trim();
                let expr = Expr::parse(body, names)?;
                let label = expr.render(names);
                TargetFunction::known(label, move |row| expr.eval(row))
            }
            _ => bail!("unknown estimand `{tok}` (expected ate, att, atc, ato, linear:A,B or expr:EXPRESSION)"),
        };
        out.push(tf);
    }
    if out.is_empty() {
        bail!("no estimands given");
    }
    Ok(out)
}

pub fn estimators(src: &str) -> Result<Vec<EstimatorKind>> {
    let mut out = Vec::new();
    for tok in src.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let k = match tok.to_ascii_lowercase().as_str() {
            "r" | "regression" => EstimatorKind::Regression,
            "i" | "ipw" => EstimatorKind::IpwNormalized,
            "ipw-unnorm" | "ipw-unnormalized" => EstimatorKind::IpwUnnormalized,
            "a" | "aipw" | "a/dr" => EstimatorKind::Aipw,
            "dr" => EstimatorKind::DrLinearInPi,
            _ => bail!("unknown estimator `{tok}` (expected regression, ipw, ipw-unnormalized, aipw or dr)"),
        };
        if !out.contains(&k) {
            out.push(k);
        }
    }
    if out.is_empty() {
        bail!("no estimators given");
    }
    Ok(out)
}

pub fn truncation(src: &str) -> Result<(f64, f64)> {
    let (l, u) = src
        .split_once(',')
        .ok_or_else(|| anyhow!("truncation must be `L,U` percentiles, got `{src}`"))?;
    let l: f64 = l.trim().parse().with_context(|| format!("lower percentile `{l}`"))?;
    let u: f64 = u.trim().parse().with_context(|| format!("upper percentile `{u}`"))?;
    Ok((l, u))
}

pub fn list<T: std::str::FromStr>(src: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    let out: Vec<T> = src
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().with_context(|| format!("{what} `{s}`")))
        .collect::<Result<_>>()?;
    if out.is_empty() {
        bail!("empty {what} list");
    }
    Ok(out)
}
