//! Nuisance models for the AIPW estimator: the propensity score and the
//! arm-wise conditional outcome means.
//!
//! Implementation method I fits both parametrically (logistic propensity,
//! linear outcome with treatment interactions); method II fits both
//! nonparametrically (additive kernel smoother, regression forests).

pub mod forest;
pub mod kernel;
pub mod linear;
pub mod logistic;

pub use forest::{Forest, ForestParams};
pub use kernel::KernelPropensity;
pub use linear::{design_row, LinearOutcomeFit};
pub use logistic::{expit, LogisticFit};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::SourceSample;
use crate::error::{Error, Result};

/// Numerical positivity guard: fitted propensities are clipped into
/// [EPS_PI, 1 - EPS_PI] before entering any inverse weight.
pub const EPS_PI: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    ParametricI,
    NonparametricII,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::ParametricI => write!(f, "I"),
            Mode::NonparametricII => write!(f, "II"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum PropensityModel {
    Logistic(LogisticFit),
    Kernel(KernelPropensity),
}

impl PropensityModel {
    /// Clipped propensity prediction.
    pub fn predict(&self, x_row: &[f64]) -> f64 {
        let raw = match self {
            PropensityModel::Logistic(m) => m.predict(x_row),
            PropensityModel::Kernel(m) => m.predict(x_row),
        };
        raw.clamp(EPS_PI, 1.0 - EPS_PI)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum OutcomeModel {
    Linear(LinearOutcomeFit),
    Forests { arm0: Forest, arm1: Forest },
}

impl OutcomeModel {
    pub fn predict(&self, x_row: &[f64], a: u8) -> f64 {
        match self {
            OutcomeModel::Linear(m) => m.predict(x_row, a as f64),
            OutcomeModel::Forests { arm0, arm1 } => {
                if a == 1 {
                    arm1.predict(x_row)
                } else {
                    arm0.predict(x_row)
                }
            }
        }
    }
}

/// Fitted nuisance pair with prediction and score accessors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NuisanceFit {
    pub mode: Mode,
    pub propensity: PropensityModel,
    pub outcome: OutcomeModel,
}

/// Per-observation nuisance predictions, precomputed once per sample.
#[derive(Debug, Clone)]
pub struct NuisancePredictions {
    /// Clipped propensity.
    pub pi: Vec<f64>,
    pub mu0: Vec<f64>,
    pub mu1: Vec<f64>,
}

impl NuisanceFit {
    /// Implementation method I: logistic propensity, linear outcome.
    pub fn fit_parametric(sample: &SourceSample) -> Result<Self> {
        check_arm_sizes(sample, 2)?;
        Ok(NuisanceFit {
            mode: Mode::ParametricI,
            propensity: PropensityModel::Logistic(LogisticFit::fit(sample)?),
            outcome: OutcomeModel::Linear(LinearOutcomeFit::fit(sample)?),
        })
    }

    /// Implementation method II: kernel propensity, forest outcomes.
    pub fn fit_nonparametric(sample: &SourceSample, seed: u64) -> Result<Self> {
        Ok(NuisanceFit {
            mode: Mode::NonparametricII,
            propensity: PropensityModel::Kernel(KernelPropensity::fit(sample)?),
            outcome: fit_forest_outcomes(sample, seed)?,
        })
    }

    /// Benchmark path for individual-level target samples: logistic
    /// propensity with forest outcome means.
    pub fn fit_target_benchmark(sample: &SourceSample, seed: u64) -> Result<Self> {
        Ok(NuisanceFit {
            mode: Mode::NonparametricII,
            propensity: PropensityModel::Logistic(LogisticFit::fit(sample)?),
            outcome: fit_forest_outcomes(sample, seed)?,
        })
    }

    /// Assemble from explicit components (validation studies that pin the
    /// propensity or outcome model).
    pub fn from_parts(mode: Mode, propensity: PropensityModel, outcome: OutcomeModel) -> Self {
        NuisanceFit { mode, propensity, outcome }
    }

    /// Evaluate pi, mu0, mu1 on every row of the sample.
    pub fn predictions(&self, sample: &SourceSample) -> NuisancePredictions {
        let n = sample.n();
        let mut pi = Vec::with_capacity(n);
        let mut mu0 = Vec::with_capacity(n);
        let mut mu1 = Vec::with_capacity(n);
        for i in 0..n {
            let row = sample.row(i);
            pi.push(self.propensity.predict(&row));
            mu0.push(self.outcome.predict(&row, 0));
            mu1.push(self.outcome.predict(&row, 1));
        }
        NuisancePredictions { pi, mu0, mu1 }
    }

    pub fn logistic(&self) -> Option<&LogisticFit> {
        match &self.propensity {
            PropensityModel::Logistic(m) => Some(m),
            PropensityModel::Kernel(_) => None,
        }
    }

    pub fn linear_outcome(&self) -> Option<&LinearOutcomeFit> {
        match &self.outcome {
            OutcomeModel::Linear(m) => Some(m),
            OutcomeModel::Forests { .. } => None,
        }
    }
}

/// Fit the arm-wise regression forests used by method II.
pub fn fit_forest_outcomes(sample: &SourceSample, seed: u64) -> Result<OutcomeModel> {
    let params = ForestParams::default();
    let mut forests = Vec::with_capacity(2);
    for arm in 0..2u8 {
        let rows: Vec<usize> = (0..sample.n()).filter(|&i| sample.a[i] == arm).collect();
        if rows.len() < 20 {
            return Err(Error::TooFewObservations { arm, n: rows.len(), min: 20 });
        }
        let mut x = Array2::zeros((rows.len(), sample.p()));
        let mut y = Vec::with_capacity(rows.len());
        for (r, &i) in rows.iter().enumerate() {
            for j in 0..sample.p() {
                x[[r, j]] = sample.x[[i, j]];
            }
            y.push(sample.y[i]);
        }
        forests.push(Forest::fit(&x, &y, params, seed.wrapping_add(arm as u64)));
    }
    let arm1 = forests.pop().expect("two arms fitted");
    let arm0 = forests.pop().expect("two arms fitted");
    Ok(OutcomeModel::Forests { arm0, arm1 })
}

fn check_arm_sizes(sample: &SourceSample, min: usize) -> Result<()> {
    for arm in 0..2u8 {
        let n = sample.a.iter().filter(|&&a| a == arm).count();
        if n < min {
            return Err(Error::TooFewObservations { arm, n, min });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn sample(n: usize, seed: u64) -> SourceSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::zeros((n, 2));
        let mut a = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let x1 = rng.random::<f64>() * 2.0 - 1.0;
            let x2 = rng.random::<f64>() * 2.0 - 1.0;
            x[[i, 0]] = x1;
            x[[i, 1]] = x2;
            let ai = if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
            a.push(ai);
            y.push(x1 + 0.5 * x2 * ai + rng.random::<f64>());
        }
        SourceSample::new(x, a, y).unwrap()
    }

    #[test]
    fn parametric_fit_exposes_components() {
        let s = sample(200, 1);
        let fit = NuisanceFit::fit_parametric(&s).unwrap();
        assert!(fit.logistic().is_some());
        assert!(fit.linear_outcome().is_some());
        let preds = fit.predictions(&s);
        assert!(preds.pi.iter().all(|p| (EPS_PI..=1.0 - EPS_PI).contains(p)));
        assert!(preds.mu0.iter().chain(&preds.mu1).all(|v| v.is_finite()));
    }

    #[test]
    fn nonparametric_fit_clips_propensity() {
        let s = sample(120, 2);
        let fit = NuisanceFit::fit_nonparametric(&s, 9).unwrap();
        let preds = fit.predictions(&s);
        let worst =
            preds.pi.iter().map(|p| p.min(1.0 - p)).fold(f64::INFINITY, f64::min);
        assert!(worst >= EPS_PI);
    }

    #[test]
    fn forest_outcome_needs_twenty_per_arm() {
        let s = sample(30, 3);
        assert!(matches!(
            fit_forest_outcomes(&s, 1),
            Err(Error::TooFewObservations { min: 20, .. })
        ));
    }

    #[test]
    fn serialization_round_trips_predictions() {
        let s = sample(150, 4);
        let fit = NuisanceFit::fit_nonparametric(&s, 12).unwrap();
        let json = serde_json::to_string(&fit).unwrap();
        let back: NuisanceFit = serde_json::from_str(&json).unwrap();
        let a = fit.predictions(&s);
        let b = back.predictions(&s);
        for i in 0..s.n() {
            assert_eq!(a.pi[i].to_bits(), b.pi[i].to_bits());
            assert_eq!(a.mu0[i].to_bits(), b.mu0[i].to_bits());
            assert_eq!(a.mu1[i].to_bits(), b.mu1[i].to_bits());
        }
    }
}
