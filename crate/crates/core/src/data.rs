//! Observational datasets: construction, validation and CSV ingestion.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major `n × p` covariate matrix with column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariates {
    names: Vec<String>,
    n: usize,
    data: Vec<f64>,
}

impl Covariates {
    pub fn from_row_major(names: Vec<String>, n: usize, data: Vec<f64>) -> Result<Self> {
        let p = names.len();
        if data.len() != n * p {
            return Err(Error::LengthMismatch {
                what: "covariate data",
                expected: n * p,
                got: data.len(),
            });
        }
        Ok(Self { names, n, data })
    }

    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let p = names.len();
        let mut data = Vec::with_capacity(rows.len() * p);
        for row in rows {
            if row.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_row_major(names, rows.len(), data)
    }

    /// Unnamed covariates `x1..xp`.
    pub fn unnamed(p: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_row_major(default_names(p), n, data)
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.ncols();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        (0..self.n).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i)[j]).collect()
    }

    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.ncols());
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            names: self.names.clone(),
            n: indices.len(),
            data,
        }
    }
}

pub fn default_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

/// An invariant violation reported by [`ObservationalDataset::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonBinaryTreatment { row: usize, value: f64 },
    DegenerateArm { arm: u8, count: usize },
    TooFewSubjects { n: usize, p: usize },
    NonFinite { row: usize, column: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonBinaryTreatment { row, value } => {
                write!(f, "row {row}: treatment value {value} is not 0 or 1")
            }
            Violation::DegenerateArm { arm, count } => {
                write!(f, "arm {arm} has {count} subject(s), need at least 2")
            }
            Violation::TooFewSubjects { n, p } => {
                write!(f, "n = {n} is below p + 2 = {}", p + 2)
            }
            Violation::NonFinite { row, column } => {
                write!(f, "row {row}: non-finite value in `{column}`")
            }
        }
    }
}

/// Observed data `(X, A, Y)` for `n` subjects.
///
/// Construction only checks that the pieces have consistent shapes; call
/// [`validate`](Self::validate) or [`validated`](Self::validated) to check the
/// remaining invariants. Datasets returned by [`read_csv`] are always valid.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationalDataset {
    covariates: Covariates,
    treatment: Vec<f64>,
    outcome: Vec<f64>,
    treatment_name: String,
    outcome_name: String,
}

impl ObservationalDataset {
    pub fn from_parts(covariates: Covariates, treatment: Vec<f64>, outcome: Vec<f64>) -> Result<Self> {
        let n = covariates.nrows();
        for (what, len) in [("treatment", treatment.len()), ("outcome", outcome.len())] {
            if len != n {
                return Err(Error::LengthMismatch {
                    what,
                    expected: n,
                    got: len,
                });
            }
        }
        Ok(Self {
            covariates,
            treatment,
            outcome,
            treatment_name: "a".into(),
            outcome_name: "y".into(),
        })
    }

    /// [`from_parts`](Self::from_parts) followed by validation.
    pub fn new(covariates: Covariates, treatment: Vec<f64>, outcome: Vec<f64>) -> Result<Self> {
        Self::from_parts(covariates, treatment, outcome)?.validated()
    }

    pub fn validated(self) -> Result<Self> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidDataset(violations))
        }
    }

    pub fn with_column_names(mut self, treatment: impl Into<String>, outcome: impl Into<String>) -> Self {
        self.treatment_name = treatment.into();
        self.outcome_name = outcome.into();
        self
    }

    pub fn n(&self) -> usize {
        self.covariates.nrows()
    }

    pub fn p(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn covariates(&self) -> &Covariates {
        &self.covariates
    }

    pub fn treatment(&self) -> &[f64] {
        &self.treatment
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn treatment_name(&self) -> &str {
        &self.treatment_name
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome_name
    }

    pub fn n_treated(&self) -> usize {
        self.treatment.iter().filter(|&&a| a == 1.0).count()
    }

    pub fn n_control(&self) -> usize {
        self.treatment.iter().filter(|&&a| a == 0.0).count()
    }

    /// Every invariant violation, in a fixed order. Never mutates `self`.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (i, &a) in self.treatment.iter().enumerate() {
            if a != 0.0 && a != 1.0 {
                out.push(Violation::NonBinaryTreatment { row: i + 1, value: a });
            }
        }
        for (arm, count) in [(0u8, self.n_control()), (1u8, self.n_treated())] {
            if count < 2 {
                out.push(Violation::DegenerateArm { arm, count });
            }
        }
        if self.n() < self.p() + 2 {
            out.push(Violation::TooFewSubjects {
                n: self.n(),
                p: self.p(),
            });
        }
        for i in 0..self.n() {
            for (j, v) in self.covariates.row(i).iter().enumerate() {
                if !v.is_finite() {
                    out.push(Violation::NonFinite {
                        row: i + 1,
                        column: self.covariates.names[j].clone(),
                    });
                }
            }
            if !self.outcome[i].is_finite() {
                out.push(Violation::NonFinite {
                    row: i + 1,
                    column: self.outcome_name.clone(),
                });
            }
        }
        out
    }

    /// Rows at `indices` (repeats allowed), in order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self {
            covariates: self.covariates.select_rows(indices),
            treatment: indices.iter().map(|&i| self.treatment[i]).collect(),
            outcome: indices.iter().map(|&i| self.outcome[i]).collect(),
            treatment_name: self.treatment_name.clone(),
            outcome_name: self.outcome_name.clone(),
        }
    }

    /// Same covariates with `A` replaced by `1 - A`.
    pub fn swap_arms(&self) -> Self {
        let mut out = self.clone();
        for a in &mut out.treatment {
            *a = 1.0 - *a;
        }
        out
    }

    /// Same data with a transformed outcome.
    pub fn map_outcome(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        for y in &mut out.outcome {
            *y = f(*y);
        }
        out
    }
}

/// Observed data plus the potential outcomes and true propensity that generated it.
#[derive(Debug, Clone)]
pub struct CounterfactualDataset {
    pub observed: ObservationalDataset,
    pub y1: Vec<f64>,
    pub y0: Vec<f64>,
    pub pi_true: Vec<f64>,
}

impl CounterfactualDataset {
    /// Checks `Y = A·Y1 + (1 − A)·Y0` and `0 < π < 1` elementwise.
    pub fn is_consistent(&self) -> bool {
        let obs = &self.observed;
        (0..obs.n()).all(|i| {
            let a = obs.treatment()[i];
            let y = a * self.y1[i] + (1.0 - a) * self.y0[i];
            y == obs.outcome()[i] && self.pi_true[i] > 0.0 && self.pi_true[i] < 1.0
        })
    }
}

/// Which CSV columns hold the treatment, the outcome and the covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMap {
    pub treatment: String,
    pub outcome: String,
    /// `None` uses every other column, in file order.
    pub covariates: Option<Vec<String>>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            treatment: "a".into(),
            outcome: "y".into(),
            covariates: None,
        }
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "na" | "NaN" | "nan" | ".")
}

pub fn load_csv(path: impl AsRef<Path>, map: &ColumnMap) -> Result<ObservationalDataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, map)
}

/// Parses and validates a headed CSV. Row numbers in errors are 1-based data rows.
pub fn read_csv<R: Read>(reader: R, map: &ColumnMap) -> Result<ObservationalDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_owned()))
    };
    let a_idx = find(&map.treatment)?;
    let y_idx = find(&map.outcome)?;
    let cov_idx: Vec<usize> = match &map.covariates {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        None => (0..header.len()).filter(|&j| j != a_idx && j != y_idx).collect(),
    };
    let used: Vec<usize> = cov_idx.iter().copied().chain([a_idx, y_idx]).collect();

    let mut missing_rows = Vec::new();
    let mut cov_data = Vec::new();
    let mut treatment = Vec::new();
    let mut outcome = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if used.iter().any(|&j| record.get(j).is_none_or(is_missing)) {
            missing_rows.push(row);
            continue;
        }
        let parse = |j: usize| -> Result<f64> {
            let cell = &record[j];
            cell.parse::<f64>().map_err(|_| Error::NotNumeric {
                row,
                column: header[j].clone(),
                value: cell.to_owned(),
            })
        };
        for &j in &cov_idx {
            cov_data.push(parse(j)?);
        }
        let a = parse(a_idx)?;
        if a != 0.0 && a != 1.0 {
            return Err(Error::NonBinaryTreatment { row, value: a });
        }
        treatment.push(a);
        outcome.push(parse(y_idx)?);
    }
    if !missing_rows.is_empty() {
        return Err(Error::MissingValues { rows: missing_rows });
    }

    let names = cov_idx.iter().map(|&j| header[j].clone()).collect();
    let n = treatment.len();
    let ds = ObservationalDataset::from_parts(Covariates::from_row_major(names, n, cov_data)?, treatment, outcome)?
        .with_column_names(&map.treatment, &map.outcome);
    for (arm, count) in [(0u8, ds.n_control()), (1u8, ds.n_treated())] {
        if count < 2 {
            return Err(Error::DegenerateArm { arm, count });
        }
    }
    ds.validated()
}

/// Writes covariates (in order), then treatment, then outcome. Floats use the
/// shortest representation that round-trips exactly.
pub fn write_csv<W: Write>(ds: &ObservationalDataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = ds.covariates.names.iter().map(String::as_str).collect();
    header.push(&ds.treatment_name);
    header.push(&ds.outcome_name);
    wtr.write_record(&header)?;
    for i in 0..ds.n() {
        let mut rec: Vec<String> = ds.covariates.row(i).iter().map(|v| format!("{v:?}")).collect();
        rec.push(format!("{}", ds.treatment[i] as u8));
        rec.push(format!("{:?}", ds.outcome[i]));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_csv(ds: &ObservationalDataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(ds, std::io::BufWriter::new(file))
}
