//! Core data types: observed samples and linear treatment rules.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

use crate::error::{Error, Result};

/// A fully observed sample: covariates, binary treatment, scalar outcome.
/// Larger outcomes are preferred. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSample {
    /// n x p covariate matrix, column order as ingested.
    pub x: Array2<f64>,
    /// Treatment indicator in {0, 1}, length n.
    pub a: Vec<u8>,
    /// Outcome, length n.
    pub y: Array1<f64>,
}

/// A sample from the target population, used only by the individual-level
/// benchmark evaluation path. Same shape and invariants as [`SourceSample`].
pub type TargetSample = SourceSample;

impl SourceSample {
    /// Validate and build a sample from parallel columns.
    ///
    /// Enforces: n >= 2, A in {0,1}, both arms present, all values finite.
    pub fn new(x: Array2<f64>, a: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::TooFewRows { n, min: 2 });
        }
        if a.len() != n || y.len() != n {
            return Err(Error::LengthMismatch {
                what: "a/y columns vs x rows".into(),
                expected: n,
                got: a.len().min(y.len()),
            });
        }
        for (i, v) in y.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { column: "y".into(), row: i });
            }
        }
        for i in 0..n {
            for j in 0..x.ncols() {
                if !x[[i, j]].is_finite() {
                    return Err(Error::NonFinite { column: format!("x{}", j + 1), row: i });
                }
            }
        }
        let mut arms = [false, false];
        let mut a_u8 = Vec::with_capacity(n);
        for (i, &v) in a.iter().enumerate() {
            if v == 0.0 {
                arms[0] = true;
                a_u8.push(0);
            } else if v == 1.0 {
                arms[1] = true;
                a_u8.push(1);
            } else {
                return Err(Error::NonBinaryTreatment { row: i, value: v });
            }
        }
        if !arms[0] {
            return Err(Error::SingleArm { arm: 1 });
        }
        if !arms[1] {
            return Err(Error::SingleArm { arm: 0 });
        }
        Ok(SourceSample { x, a: a_u8, y: Array1::from(y) })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Row i of the covariate matrix as a plain slice-backed vector.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).to_vec()
    }
}

/// Validate tabular records (rows of `y, a, x1..xp` ordered per the CSV
/// header) into a [`SourceSample`]. Column order of X is preserved.
pub fn validate_dataset(rows: &[Vec<f64>], p: usize) -> Result<SourceSample> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::TooFewRows { n, min: 2 });
    }
    let mut x = Array2::zeros((n, p));
    let mut a = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != p + 2 {
            return Err(Error::Parse(format!(
                "row {} has {} fields, expected {}",
                i,
                row.len(),
                p + 2
            )));
        }
        y.push(row[0]);
        a.push(row[1]);
        for j in 0..p {
            x[[i, j]] = row[j + 2];
        }
    }
    SourceSample::new(x, a, y)
}

/// Read a sample from CSV with header `y,a,x1,...,xp`.
pub fn read_csv<R: Read>(reader: R) -> Result<SourceSample> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 3 || cols[0] != "y" || cols[1] != "a" {
        return Err(Error::Parse(format!(
            "expected header `y,a,x1,...`, got `{}`",
            cols.join(",")
        )));
    }
    for (j, c) in cols.iter().skip(2).enumerate() {
        let want = format!("x{}", j + 1);
        if *c != want {
            return Err(Error::Parse(format!("expected column `{}`, got `{}`", want, c)));
        }
    }
    let p = cols.len() - 2;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let mut row = Vec::with_capacity(p + 2);
        for field in rec.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: `{}` is not a number", i, field)))?;
            row.push(v);
        }
        rows.push(row);
    }
    validate_dataset(&rows, p)
}

/// Write a sample as CSV with header `y,a,x1,...,xp`.
///
/// Floats are written with round-trip precision so that read-back
/// reproduces the numeric content bit-exactly.
pub fn write_csv<W: Write>(sample: &SourceSample, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["y".to_string(), "a".to_string()];
    for j in 0..sample.p() {
        header.push(format!("x{}", j + 1));
    }
    wtr.write_record(&header).map_err(|e| Error::Parse(e.to_string()))?;
    for i in 0..sample.n() {
        let mut rec = vec![fmt_roundtrip(sample.y[i]), format!("{}", sample.a[i])];
        for j in 0..sample.p() {
            rec.push(fmt_roundtrip(sample.x[[i, j]]));
        }
        wtr.write_record(&rec).map_err(|e| Error::Parse(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Shortest decimal representation that parses back to the same f64.
pub fn fmt_roundtrip(v: f64) -> String {
    let mut s = format!("{}", v);
    if s.parse::<f64>() != Ok(v) {
        s = format!("{:?}", v);
    }
    s
}

/// A linear individualized treatment rule over the augmented covariate
/// vector (1, x). The coefficient vector is kept at unit Euclidean norm;
/// decisions are scale invariant so this costs nothing and pins a unique
/// representative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRule {
    beta: Vec<f64>,
}

impl LinearRule {
    /// Build a rule from raw coefficients (intercept first), normalizing
    /// to unit norm. Fails on zero or non-finite input.
    pub fn new(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() || beta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse("rule coefficients must be finite and non-empty".into()));
        }
        let norm = beta.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return Err(Error::Parse("rule coefficients must not all be zero".into()));
        }
        let beta = beta.into_iter().map(|v| v / norm).collect();
        Ok(LinearRule { beta })
    }

    /// Coefficients, intercept first, unit norm.
    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Number of covariates the rule applies to.
    pub fn p(&self) -> usize {
        self.beta.len() - 1
    }

    /// Decision for a covariate row: treat iff (1, x)' beta > 0.
    /// Exact ties at the boundary decide 0.
    pub fn decide(&self, x_row: &[f64]) -> u8 {
        debug_assert_eq!(x_row.len() + 1, self.beta.len());
        let mut s = self.beta[0];
        for (v, b) in x_row.iter().zip(&self.beta[1..]) {
            s += v * b;
        }
        (s > 0.0) as u8
    }

    /// Decisions for every row of a covariate matrix.
    pub fn decide_all(&self, x: &Array2<f64>) -> Result<Vec<u8>> {
        if x.ncols() + 1 != self.beta.len() {
            return Err(Error::DimensionMismatch { rule_dim: self.beta.len(), x_dim: x.ncols() });
        }
        let mut out = Vec::with_capacity(x.nrows());
        for i in 0..x.nrows() {
            let mut s = self.beta[0];
            for j in 0..x.ncols() {
                s += x[[i, j]] * self.beta[j + 1];
            }
            out.push((s > 0.0) as u8);
        }
        Ok(out)
    }
}
