//! Moment constraints: descriptors, target values, and the centered
//! constraint matrix consumed by the calibration solver.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::data::SourceSample;
use crate::error::{Error, Result};

/// A single moment of the covariate distribution. Indices are 1-based to
/// match the CSV column names `x1..xp`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MomentDescriptor {
    /// Mean of covariate `index`.
    Mean { index: usize },
    /// Mean of the squared covariate `index`.
    Mean2 { index: usize },
    /// Mean of the product of covariates `i` and `j`.
    Cross { i: usize, j: usize },
}

impl MomentDescriptor {
    fn check(&self, p: usize) -> Result<()> {
        let bad = |index: usize| Err(Error::IndexOutOfRange { index, p });
        match *self {
            MomentDescriptor::Mean { index } | MomentDescriptor::Mean2 { index } => {
                if index == 0 || index > p {
                    return bad(index);
                }
            }
            MomentDescriptor::Cross { i, j } => {
                if i == 0 || i > p {
                    return bad(i);
                }
                if j == 0 || j > p {
                    return bad(j);
                }
            }
        }
        Ok(())
    }

    fn evaluate(&self, row: &[f64]) -> f64 {
        match *self {
            MomentDescriptor::Mean { index } => row[index - 1],
            MomentDescriptor::Mean2 { index } => row[index - 1] * row[index - 1],
            MomentDescriptor::Cross { i, j } => row[i - 1] * row[j - 1],
        }
    }
}

/// Ordered moment functions g and their target values mu_g0 from the
/// target population. First and second raw moments only; quantile targets
/// are rejected at parse time (no supported descriptor exists for them).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub moments: Vec<MomentDescriptor>,
    pub targets: Vec<f64>,
}

impl ConstraintSpec {
    pub fn new(moments: Vec<MomentDescriptor>, targets: Vec<f64>) -> Result<Self> {
        if moments.is_empty() {
            return Err(Error::TargetLengthMismatch { moments: 0, targets: targets.len() });
        }
        if moments.len() != targets.len() {
            return Err(Error::TargetLengthMismatch {
                moments: moments.len(),
                targets: targets.len(),
            });
        }
        if let Some(bad) = targets.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { column: format!("targets[{bad}]"), row: bad });
        }
        Ok(ConstraintSpec { moments, targets })
    }

    /// Means of covariates `1..=k` with the given targets.
    pub fn covariate_means(targets: &[f64]) -> Result<Self> {
        let moments = (1..=targets.len()).map(|index| MomentDescriptor::Mean { index }).collect();
        ConstraintSpec::new(moments, targets.to_vec())
    }

    pub fn q(&self) -> usize {
        self.moments.len()
    }

    /// Parse the JSON wire format, rejecting unsupported kinds (e.g.
    /// quantile constraints) with a dedicated error rather than a generic
    /// deserialization failure.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if let Some(moments) = raw.get("moments").and_then(|m| m.as_array()) {
            for m in moments {
                if let Some(kind) = m.get("kind").and_then(|k| k.as_str()) {
                    if !matches!(kind, "mean" | "mean2" | "cross") {
                        return Err(Error::UnsupportedConstraint(kind.to_string()));
                    }
                }
            }
        }
        let spec: ConstraintSpec =
            serde_json::from_value(raw).map_err(|e| Error::Parse(e.to_string()))?;
        ConstraintSpec::new(spec.moments, spec.targets)
    }
}

/// Centered constraint matrix: row i holds g(X_i) - mu_g0.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMatrix {
    pub g: Array2<f64>,
}

impl ConstraintMatrix {
    pub fn n(&self) -> usize {
        self.g.nrows()
    }

    pub fn q(&self) -> usize {
        self.g.ncols()
    }

    pub fn row(&self, i: usize) -> Array1<f64> {
        self.g.row(i).to_owned()
    }
}

/// Evaluate the centered moments for every observation.
pub fn build_constraint_matrix(
    sample: &SourceSample,
    spec: &ConstraintSpec,
) -> Result<ConstraintMatrix> {
    build_constraint_matrix_x(&sample.x, spec)
}

/// Same, over a bare covariate matrix (no treatment/outcome needed).
pub fn build_constraint_matrix_x(x: &Array2<f64>, spec: &ConstraintSpec) -> Result<ConstraintMatrix> {
    let p = x.ncols();
    for m in &spec.moments {
        m.check(p)?;
    }
    let n = x.nrows();
    let q = spec.q();
    let mut g = Array2::zeros((n, q));
    let mut row = vec![0.0; p];
    for i in 0..n {
        for (j, r) in row.iter_mut().enumerate() {
            *r = x[[i, j]];
        }
        for (m, (desc, target)) in spec.moments.iter().zip(&spec.targets).enumerate() {
            g[[i, m]] = desc.evaluate(&row) - target;
        }
    }
    Ok(ConstraintMatrix { g })
}

/// Empirical moments of the sample under the given descriptors; handy for
/// building exactly centered fixtures.
pub fn empirical_moments(sample: &SourceSample, moments: &[MomentDescriptor]) -> Result<Vec<f64>> {
    let p = sample.p();
    for m in moments {
        m.check(p)?;
    }
    let n = sample.n() as f64;
    let mut out = vec![0.0; moments.len()];
    for i in 0..sample.n() {
        let row = sample.row(i);
        for (k, m) in moments.iter().enumerate() {
            out[k] += m.evaluate(&row);
        }
    }
    for v in out.iter_mut() {
        *v /= n;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::validate_dataset;

    fn sample() -> SourceSample {
        let rows = vec![
            vec![1.0, 0.0, 0.5, -1.0, 0.3],
            vec![2.0, 1.0, 1.5, 0.0, -0.7],
            vec![0.5, 1.0, -0.5, 2.0, 0.1],
            vec![1.2, 0.0, 0.1, 1.0, 0.9],
        ];
        validate_dataset(&rows, 3).unwrap()
    }

    #[test]
    fn centering_identity() {
        let s = sample();
        let moments: Vec<_> = (1..=3).map(|index| MomentDescriptor::Mean { index }).collect();
        let targets = empirical_moments(&s, &moments).unwrap();
        let spec = ConstraintSpec::new(moments, targets).unwrap();
        let g = build_constraint_matrix(&s, &spec).unwrap();
        for m in 0..g.q() {
            let mean: f64 = g.g.column(m).iter().sum::<f64>() / s.n() as f64;
            assert!(mean.abs() <= 1e-12, "column {m} mean {mean}");
        }
    }

    #[test]
    fn scenario_two_targets() {
        // Means of X1..X3 against target-population values.
        let s = sample();
        let spec = ConstraintSpec::covariate_means(&[0.8, 0.6, -0.6]).unwrap();
        let g = build_constraint_matrix(&s, &spec).unwrap();
        assert_eq!((g.n(), g.q()), (4, 3));
        assert!((g.g[[0, 0]] - (0.5 - 0.8)).abs() < 1e-15);
        assert!((g.g[[2, 1]] - (2.0 - 0.6)).abs() < 1e-15);
        assert!((g.g[[3, 2]] - (0.9 + 0.6)).abs() < 1e-15);
    }

    #[test]
    fn second_moments_double_width() {
        let s = sample();
        let mut moments: Vec<_> = (1..=3).map(|index| MomentDescriptor::Mean { index }).collect();
        moments.extend((1..=3).map(|index| MomentDescriptor::Mean2 { index }));
        let targets = empirical_moments(&s, &moments).unwrap();
        let spec = ConstraintSpec::new(moments, targets).unwrap();
        let g = build_constraint_matrix(&s, &spec).unwrap();
        assert_eq!(g.q(), 6);
    }

    #[test]
    fn rejects_out_of_range_index() {
        let s = sample();
        let spec =
            ConstraintSpec::new(vec![MomentDescriptor::Mean { index: 4 }], vec![0.0]).unwrap();
        assert!(matches!(
            build_constraint_matrix(&s, &spec),
            Err(Error::IndexOutOfRange { index: 4, p: 3 })
        ));
    }

    #[test]
    fn json_wire_format() {
        let text = r#"{"moments":[{"kind":"mean","index":1},{"kind":"mean2","index":2},{"kind":"cross","i":1,"j":3}],"targets":[0.5,1.2,-0.1]}"#;
        let spec = ConstraintSpec::from_json(text).unwrap();
        assert_eq!(spec.q(), 3);
        assert_eq!(spec.moments[2], MomentDescriptor::Cross { i: 1, j: 3 });
    }

    #[test]
    fn rejects_quantile_constraints() {
        let text = r#"{"moments":[{"kind":"quantile","index":1,"level":0.5}],"targets":[0.0]}"#;
        assert!(matches!(
            ConstraintSpec::from_json(text),
            Err(Error::UnsupportedConstraint(k)) if k == "quantile"
        ));
    }
}
