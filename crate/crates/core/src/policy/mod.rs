//! Rule search over the unit sphere and rule-comparison metrics.

mod ga;
mod grid;

pub use ga::{ga_optimize, GaConfig, GaResult};
pub use grid::{grid_search_sphere, refine_sphere};

use ndarray::Array2;

use crate::data::LinearRule;
use crate::error::{Error, Result};
use crate::nuisance::LinearOutcomeFit;
use crate::value::ValueSurface;
use crate::SourceSample;

/// Objective over linear rules. Implementations whose value depends on the
/// rule only through its decision vector can expose a packed decision key
/// so callers may deduplicate evaluations exactly.
pub trait RuleObjective {
    fn value(&self, rule: &LinearRule) -> f64;

    /// Packed decision bits, when the objective is a decision functional.
    fn decision_key(&self, _rule: &LinearRule) -> Option<Vec<u64>> {
        None
    }
}

/// Plain-closure objective (no caching key).
pub struct FnObjective<F: Fn(&LinearRule) -> f64>(pub F);

impl<F: Fn(&LinearRule) -> f64> RuleObjective for FnObjective<F> {
    fn value(&self, rule: &LinearRule) -> f64 {
        self.0(rule)
    }
}

impl RuleObjective for ValueSurface<'_> {
    fn value(&self, rule: &LinearRule) -> f64 {
        ValueSurface::value(self, rule).expect("rule dimension checked by caller")
    }

    fn decision_key(&self, rule: &LinearRule) -> Option<Vec<u64>> {
        let d = self.decisions(rule).expect("rule dimension checked by caller");
        Some(pack_bits(&d))
    }
}

/// Lexicographic comparison used to break exact value ties in searches.
pub(crate) fn lex_smaller(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

pub(crate) fn pack_bits(decisions: &[u8]) -> Vec<u64> {
    let mut out = vec![0u64; decisions.len().div_ceil(64)];
    for (i, &d) in decisions.iter().enumerate() {
        if d == 1 {
            out[i / 64] |= 1 << (i % 64);
        }
    }
    out
}

/// Q-learning benchmark: fit the linear outcome model with treatment
/// interactions and read the rule off the interaction block, since the
/// fitted contrast is mu(x,1) - mu(x,0) = (1, x') theta_interaction.
pub fn q_learning_rule(sample: &SourceSample) -> Result<LinearRule> {
    let fit = LinearOutcomeFit::fit(sample)?;
    LinearRule::new(fit.interaction_block().to_vec())
}

/// Percentage of correct decisions: agreement rate of two rules over a
/// covariate sample.
pub fn pcd(rule_a: &LinearRule, rule_b: &LinearRule, x: &Array2<f64>) -> Result<f64> {
    if rule_a.beta().len() != rule_b.beta().len() {
        return Err(Error::DimensionMismatch {
            rule_dim: rule_a.beta().len(),
            x_dim: rule_b.beta().len() - 1,
        });
    }
    let da = rule_a.decide_all(x)?;
    let db = rule_b.decide_all(x)?;
    let disagreements: usize =
        da.iter().zip(&db).filter(|(a, b)| a != b).count();
    Ok(1.0 - disagreements as f64 / x.nrows() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn q_learning_recovers_exact_interaction() {
        // y = a * x1, noise free: contrast is (0, 1, 0).
        let mut x = Array2::zeros((40, 2));
        let mut a = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let x1 = (i as f64 - 20.0) / 7.0;
            let x2 = ((i * 13) % 40) as f64 / 11.0 - 1.5;
            x[[i, 0]] = x1;
            x[[i, 1]] = x2;
            let ai = (i % 2) as f64;
            a.push(ai);
            y.push(ai * x1);
        }
        let s = SourceSample::new(x, a, y).unwrap();
        let rule = q_learning_rule(&s).unwrap();
        let b = rule.beta();
        assert!(b[0].abs() < 1e-8 && (b[1] - 1.0).abs() < 1e-8 && b[2].abs() < 1e-8,
            "rule {b:?}");
    }

    #[test]
    fn q_learning_is_well_defined_on_noise() {
        let mut x = Array2::zeros((60, 2));
        let mut a = Vec::new();
        let mut y = Vec::new();
        let mut state = 99u64;
        let mut unif = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for i in 0..60 {
            x[[i, 0]] = unif() * 2.0 - 1.0;
            x[[i, 1]] = unif() * 2.0 - 1.0;
            a.push(if unif() < 0.5 { 1.0 } else { 0.0 });
            y.push(unif());
        }
        let s = SourceSample::new(x, a, y).unwrap();
        let rule = q_learning_rule(&s).unwrap();
        let norm: f64 = rule.beta().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-10);
    }

    #[test]
    fn pcd_basics() {
        let x = array![[1.0], [-1.0], [2.0], [-2.0]];
        let r = LinearRule::new(vec![0.0, 1.0]).unwrap();
        let neg = LinearRule::new(vec![0.0, -1.0]).unwrap();
        assert_eq!(pcd(&r, &r, &x).unwrap(), 1.0);
        assert_eq!(pcd(&r, &neg, &x).unwrap(), 0.0);
    }

    #[test]
    fn pcd_hand_count() {
        // rules disagree on exactly one of four points
        let x = array![[0.5], [1.5], [-0.5], [-1.5]];
        let a = LinearRule::new(vec![0.0, 1.0]).unwrap(); // treat iff x > 0
        let b = LinearRule::new(vec![-1.0, 1.0]).unwrap(); // treat iff x > 1
        assert_eq!(pcd(&a, &b, &x).unwrap(), 0.75);
    }

    #[test]
    fn pcd_is_symmetric() {
        let x = array![[0.3, 1.0], [0.9, -1.0], [-0.4, 0.2], [2.0, 0.4], [-1.0, -1.0]];
        let a = LinearRule::new(vec![0.1, 0.8, -0.6]).unwrap();
        let b = LinearRule::new(vec![-0.2, 0.5, 0.5]).unwrap();
        assert_eq!(pcd(&a, &b, &x).unwrap(), pcd(&b, &a, &x).unwrap());
    }

    #[test]
    fn decisions_are_scale_invariant() {
        let x = array![[0.3, 1.0], [0.9, -1.0], [-0.4, 0.2], [2.0, 0.4]];
        let raw = vec![0.4, -1.2, 0.7];
        let r1 = LinearRule::new(raw.clone()).unwrap();
        let r2 = LinearRule::new(raw.iter().map(|v| 37.5 * v).collect()).unwrap();
        assert_eq!(r1.decide_all(&x).unwrap(), r2.decide_all(&x).unwrap());
    }
}
