//! Calibrated and original AIPW value estimation.

mod variance;

pub use variance::{estimate_value, estimate_value_with, InfluenceComponents, ValueEstimate};

use ndarray::Array2;

use crate::data::{LinearRule, SourceSample, TargetSample};
use crate::error::{Error, Result};
use crate::nuisance::{NuisanceFit, NuisancePredictions};
use crate::WeightSolution;

/// Pointwise AIPW pseudo-outcome:
///
///   psi = I{a = d} / rho(a|x) * (y - mu_d) + mu_d,
///
/// with rho(a|x) = pi(x) a + (1 - pi(x))(1 - a) and mu_d the fitted mean
/// under the rule's assignment.
#[inline]
pub fn psi(y: f64, a: u8, pi: f64, mu0: f64, mu1: f64, d: u8) -> f64 {
    let mu_d = if d == 1 { mu1 } else { mu0 };
    if a == d {
        let rho = if a == 1 { pi } else { 1.0 - pi };
        (y - mu_d) / rho + mu_d
    } else {
        mu_d
    }
}

/// Per-observation psi evaluated under both possible assignments, so a
/// rule's value reduces to a weighted select-and-sum. The estimator
/// depends on the rule only through its decision vector.
#[derive(Debug, Clone)]
pub struct PsiTable {
    pub psi0: Vec<f64>,
    pub psi1: Vec<f64>,
}

impl PsiTable {
    pub fn build(sample: &SourceSample, preds: &NuisancePredictions) -> Self {
        let n = sample.n();
        let mut psi0 = Vec::with_capacity(n);
        let mut psi1 = Vec::with_capacity(n);
        for i in 0..n {
            let (y, a) = (sample.y[i], sample.a[i]);
            psi0.push(psi(y, a, preds.pi[i], preds.mu0[i], preds.mu1[i], 0));
            psi1.push(psi(y, a, preds.pi[i], preds.mu0[i], preds.mu1[i], 1));
        }
        PsiTable { psi0, psi1 }
    }

    #[inline]
    pub fn at(&self, i: usize, d: u8) -> f64 {
        if d == 1 {
            self.psi1[i]
        } else {
            self.psi0[i]
        }
    }

    pub fn select(&self, decisions: &[u8]) -> Vec<f64> {
        decisions.iter().enumerate().map(|(i, &d)| self.at(i, d)).collect()
    }
}

/// Weighted AIPW value surface over a fixed sample, nuisance fit and
/// weight vector; evaluating a rule costs one pass over the data.
pub struct ValueSurface<'a> {
    x: &'a Array2<f64>,
    psi: PsiTable,
    /// Normalized weights; uniform 1/n reproduces the original estimator.
    weights: Vec<f64>,
}

impl<'a> ValueSurface<'a> {
    pub fn new(
        sample: &'a SourceSample,
        preds: &NuisancePredictions,
        weights: Option<&WeightSolution>,
    ) -> Result<Self> {
        let n = sample.n();
        let weights = match weights {
            Some(w) => {
                if w.weights.len() != n {
                    return Err(Error::LengthMismatch {
                        what: "calibration weights".into(),
                        expected: n,
                        got: w.weights.len(),
                    });
                }
                w.weights.clone()
            }
            None => vec![1.0 / n as f64; n],
        };
        Ok(ValueSurface { x: &sample.x, psi: PsiTable::build(sample, preds), weights })
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Decision vector of a rule on the surface's own covariates.
    pub fn decisions(&self, rule: &LinearRule) -> Result<Vec<u8>> {
        rule.decide_all(self.x)
    }

    /// Value at a rule: sum_i w_i psi_i(d_i).
    pub fn value(&self, rule: &LinearRule) -> Result<f64> {
        if self.x.ncols() + 1 != rule.beta().len() {
            return Err(Error::DimensionMismatch {
                rule_dim: rule.beta().len(),
                x_dim: self.x.ncols(),
            });
        }
        let beta = rule.beta();
        let mut acc = 0.0;
        for i in 0..self.x.nrows() {
            let mut t = beta[0];
            for j in 0..self.x.ncols() {
                t += self.x[[i, j]] * beta[j + 1];
            }
            acc += self.weights[i] * if t > 0.0 { self.psi.psi1[i] } else { self.psi.psi0[i] };
        }
        Ok(acc)
    }

    pub fn value_of_decisions(&self, decisions: &[u8]) -> f64 {
        decisions
            .iter()
            .zip(&self.weights)
            .enumerate()
            .map(|(i, (&d, w))| w * self.psi.at(i, d))
            .sum()
    }

    pub fn psi_table(&self) -> &PsiTable {
        &self.psi
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Point value of a rule: calibrated when weights are given, original
/// (uniform 1/n) otherwise.
pub fn aipw_value(
    sample: &SourceSample,
    rule: &LinearRule,
    fit: &NuisanceFit,
    weights: Option<&WeightSolution>,
) -> Result<f64> {
    let preds = fit.predictions(sample);
    ValueSurface::new(sample, &preds, weights)?.value(rule)
}

/// Individual-level benchmark evaluation on a target sample: the AIPW
/// estimator with a logistic propensity and forest outcome means fitted
/// on the target sample itself.
pub fn evaluate_on_target(
    target: &TargetSample,
    rule: &LinearRule,
    seed: u64,
) -> Result<ValueEstimate> {
    let fit = NuisanceFit::fit_target_benchmark(target, seed)?;
    estimate_value(target, rule, &fit, None, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nuisance::Mode;
    use ndarray::Array2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn toy_sample(n: usize, seed: u64) -> SourceSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::zeros((n, 2));
        let mut a = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            x[[i, 0]] = rng.random::<f64>() * 2.0 - 1.0;
            x[[i, 1]] = rng.random::<f64>() * 2.0 - 1.0;
            a.push(if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 });
            y.push(rng.random::<f64>() * 3.0);
        }
        SourceSample::new(x, a, y).unwrap()
    }

    #[test]
    fn psi_direct_formula() {
        // matching arm: (y - mu)/rho + mu
        assert_eq!(psi(2.0, 1, 0.5, 0.0, 1.0, 1), (2.0 - 1.0) / 0.5 + 1.0);
        // mismatched arm: psi = mu_d exactly
        assert_eq!(psi(2.0, 0, 0.3, 0.7, 1.0, 1), 1.0);
        // oracle outcome model: residual vanishes
        assert_eq!(psi(2.0, 1, 0.25, 2.0, 2.0, 1), 2.0);
    }

    #[test]
    fn uniform_weights_reproduce_original() {
        let s = toy_sample(60, 4);
        let fit = NuisanceFit::fit_parametric(&s).unwrap();
        let rule = LinearRule::new(vec![0.2, 1.0, -0.4]).unwrap();
        let orig = aipw_value(&s, &rule, &fit, None).unwrap();
        let w = WeightSolution::uniform(s.n());
        let cal = aipw_value(&s, &rule, &fit, Some(&w)).unwrap();
        assert_eq!(orig.to_bits(), cal.to_bits());
    }

    #[test]
    fn constant_outcome_with_fitted_model_gives_constant_value() {
        let mut s = toy_sample(50, 5);
        for i in 0..s.n() {
            s.y[i] = 4.5;
        }
        let fit = NuisanceFit::fit_parametric(&s).unwrap();
        let rule = LinearRule::new(vec![0.0, 1.0, 0.0]).unwrap();
        let v = aipw_value(&s, &rule, &fit, None).unwrap();
        assert!((v - 4.5).abs() < 1e-9, "value {v}");
    }

    #[test]
    fn hand_fixture_matches_brute_force() {
        // n = 5 with pinned nuisances; compare against a spreadsheet-style
        // direct summation.
        let x = ndarray::array![[0.5], [-1.0], [0.2], [2.0], [-0.3]];
        let s = SourceSample::new(
            x,
            vec![1.0, 0.0, 1.0, 0.0, 1.0],
            vec![2.0, 1.0, -0.5, 3.0, 0.0],
        )
        .unwrap();
        let fit = NuisanceFit::from_parts(
            Mode::ParametricI,
            crate::nuisance::PropensityModel::Logistic(
                crate::nuisance::LogisticFit::from_coefficients(vec![0.1, 0.4]),
            ),
            crate::nuisance::OutcomeModel::Linear(crate::nuisance::LinearOutcomeFit {
                theta_hat: vec![0.5, 0.2, 1.0, -0.3],
                p: 1,
                residual: 0.0,
            }),
        );
        let rule = LinearRule::new(vec![0.1, 1.0]).unwrap();
        let w = WeightSolution {
            lambda_hat: vec![],
            weights: vec![0.1, 0.2, 0.3, 0.25, 0.15],
            w_big: vec![0.5, 1.0, 1.5, 1.25, 0.75],
            residual: 0.0,
            constraint_residual: 0.0,
            feasible: true,
            has_negative: false,
            stabilized: false,
        };
        let got = aipw_value(&s, &rule, &fit, Some(&w)).unwrap();

        // brute force
        let mut expect = 0.0;
        for i in 0..5 {
            let row = s.row(i);
            let t = 0.1 + row[0];
            let d = (t > 0.0) as u8;
            let pi = crate::nuisance::expit(0.1 + 0.4 * row[0]).clamp(0.01, 0.99);
            let mu = |a: f64| 0.5 + 0.2 * row[0] + 1.0 * a - 0.3 * a * row[0];
            let mu_d = mu(d as f64);
            let ind = (s.a[i] == d) as u8 as f64;
            let rho = pi * s.a[i] as f64 + (1.0 - pi) * (1.0 - s.a[i] as f64);
            expect += w.weights[i] * (ind / rho * (s.y[i] - mu_d) + mu_d);
        }
        assert!((got - expect).abs() < 1e-12, "got {got} expect {expect}");
    }

    #[test]
    fn target_benchmark_matches_source_formula() {
        let s = toy_sample(80, 6);
        let rule = LinearRule::new(vec![0.0, 0.6, -0.8]).unwrap();
        let est = evaluate_on_target(&s, &rule, 99).unwrap();
        let fit = NuisanceFit::fit_target_benchmark(&s, 99).unwrap();
        let direct = aipw_value(&s, &rule, &fit, None).unwrap();
        assert!((est.value - direct).abs() < 1e-12);
    }

    #[test]
    fn complementary_rules_partition_indicators() {
        let s = toy_sample(40, 7);
        let rule = LinearRule::new(vec![0.3, -0.5, 0.9]).unwrap();
        let neg = LinearRule::new(rule.beta().iter().map(|v| -v).collect()).unwrap();
        let d1 = rule.decide_all(&s.x).unwrap();
        let d2 = neg.decide_all(&s.x).unwrap();
        for (a, b) in d1.iter().zip(&d2) {
            // boundary-free sample: decisions complement exactly
            assert_eq!(a + b, 1);
        }
    }
}
