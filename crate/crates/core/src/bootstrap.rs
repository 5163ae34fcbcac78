//! Pairs bootstrap: resample rows `(X, A, Y)` jointly, rerun the whole
//! pipeline (both fits, truncation, estimation) on each replicate.

use rand::Rng;

use crate::data::ObservationalDataset;
use crate::error::{Error, Result};
use crate::estimators::{difference_in_means, EstimatorKind, PointEstimate};
use crate::numeric::{quantile_sorted, sample_sd};
use crate::parallel::{map_indexed, replicate_rng, with_workers};
use crate::pipeline::{CellOutcome, EstimationPipeline, Uncertainty};
use crate::target::TargetFunction;

/// Share of failed replicates above which a cell is declared unstable.
pub const MAX_FAILED_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub seed: u64,
    /// Worker threads; `0` uses the rayon default.
    pub workers: usize,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            replicates: 1000,
            seed: 2019,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    pub point: PointEstimate,
    pub se: f64,
    pub ci: (f64, f64),
    pub replicates: usize,
    pub replicates_ok: usize,
    pub replicate_values: Vec<f64>,
    pub seed: u64,
}

/// Bootstrap draws for every cell of a pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct CellBootstraps {
    /// Unweighted difference of means; `None` if too many replicates lacked an arm.
    pub unweighted: Option<Uncertainty>,
    /// `None` for cells without a full-data estimate.
    pub cells: Vec<Option<Result<Uncertainty, String>>>,
}

/// Row indices drawn with replacement for replicate `index`.
pub fn resample_indices(n: usize, seed: u64, index: u64) -> Vec<usize> {
    let mut rng = replicate_rng(seed, index);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

fn summarize(values: &[Option<f64>], requested: usize) -> Result<(Uncertainty, Vec<f64>)> {
    let ok: Vec<f64> = values.iter().flatten().copied().collect();
    let failed = requested - ok.len();
    if ok.len() < 2 || failed as f64 > MAX_FAILED_FRACTION * requested as f64 {
        return Err(Error::BootstrapUnstable { failed, requested });
    }
    let mut sorted = ok.clone();
    sorted.sort_by(f64::total_cmp);
    let u = Uncertainty {
        se: sample_sd(&ok),
        ci: (quantile_sorted(&sorted, 0.025), quantile_sorted(&sorted, 0.975)),
        replicates_ok: ok.len(),
        replicates: requested,
    };
    Ok((u, ok))
}

/// Per replicate: the unweighted difference followed by every cell value.
fn replicate_values(
    ds: &ObservationalDataset,
    pipeline: &EstimationPipeline,
    active: &[bool],
    opts: &BootstrapOptions,
) -> Result<Vec<Vec<Option<f64>>>> {
    let n = ds.n();
    with_workers(opts.workers, || {
        map_indexed(opts.replicates, |b| {
            let sample = ds.select_rows(&resample_indices(n, opts.seed, b as u64));
            let mut row = Vec::with_capacity(active.len() + 1);
            // an arm with fewer than 2 rows fails dataset validation; count it as failed
            if sample.n_treated() < 2 || sample.n_control() < 2 {
                row.resize(active.len() + 1, None);
                return row;
            }
            row.push(difference_in_means(&sample).ok());
            let fitted = pipeline.fit(&sample);
            let outcomes = pipeline.evaluate_fitted(&sample, &fitted);
            row.extend(outcomes.iter().zip(active).map(|(o, a)| if *a { o.value() } else { None }));
            row
        })
    })
}

/// Bootstrap SEs for every cell that has a full-data estimate.
pub fn bootstrap_cells(
    ds: &ObservationalDataset,
    pipeline: &EstimationPipeline,
    points: &[CellOutcome],
    opts: &BootstrapOptions,
) -> Result<CellBootstraps> {
    if opts.replicates < 2 {
        return Err(Error::Config("bootstrap needs at least 2 replicates".into()));
    }
    let active: Vec<bool> = points.iter().map(|p| matches!(p, CellOutcome::Estimate(_))).collect();
    let rows = replicate_values(ds, pipeline, &active, opts)?;
    let column = |j: usize| rows.iter().map(|r| r[j]).collect::<Vec<_>>();
    let unweighted = summarize(&column(0), opts.replicates).ok().map(|(u, _)| u);
    let cells = active
        .iter()
        .enumerate()
        .map(|(j, a)| {
            a.then(|| {
                summarize(&column(j + 1), opts.replicates)
                    .map(|(u, _)| u)
                    .map_err(|e| e.to_string())
            })
        })
        .collect();
    Ok(CellBootstraps { unweighted, cells })
}

/// Bootstrap SE for a single estimator × estimand pair under the pipeline's
/// designs, truncation and options.
pub fn bootstrap_se(
    ds: &ObservationalDataset,
    pipeline: &EstimationPipeline,
    kind: EstimatorKind,
    tf: &TargetFunction,
    replicates: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    bootstrap_se_with(
        ds,
        pipeline,
        kind,
        tf,
        &BootstrapOptions {
            replicates,
            seed,
            workers: 0,
        },
    )
}

pub fn bootstrap_se_with(
    ds: &ObservationalDataset,
    pipeline: &EstimationPipeline,
    kind: EstimatorKind,
    tf: &TargetFunction,
    opts: &BootstrapOptions,
) -> Result<BootstrapResult> {
    if opts.replicates < 2 {
        return Err(Error::Config("bootstrap needs at least 2 replicates".into()));
    }
    let single = EstimationPipeline {
        estimands: vec![tf.clone()],
        estimators: vec![kind],
        ..pipeline.clone()
    };
    if !single.is_applicable(kind, tf) {
        return Err(Error::InvalidPair {
            kind: kind.name(),
            estimand: tf.label(),
        });
    }
    let point = match single.evaluate(ds).pop() {
        Some(CellOutcome::Estimate(e)) => e,
        Some(CellOutcome::Failed(msg)) => return Err(Error::Config(format!("full-data estimate failed: {msg}"))),
        _ => unreachable!("single applicable cell"),
    };
    let rows = replicate_values(ds, &single, &[true], opts)?;
    let values: Vec<Option<f64>> = rows.iter().map(|r| r[1]).collect();
    let (u, ok) = summarize(&values, opts.replicates)?;
    Ok(BootstrapResult {
        point,
        se: u.se,
        ci: u.ci,
        replicates: opts.replicates,
        replicates_ok: u.replicates_ok,
        replicate_values: ok,
        seed: opts.seed,
    })
}
