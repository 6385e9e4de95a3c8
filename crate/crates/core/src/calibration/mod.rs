//! Calibration weighting: solve for weights that make weighted source
//! moments match target-population summary statistics, minimizing a
//! Cressie-Read divergence from the uniform distribution.

mod feasibility;
mod rho;
mod solver;

pub use feasibility::{check_feasibility, FeasibilityReport};
pub use rho::{rho, rho_prime};
pub use solver::{compute_weights, solve_lambda, stabilize_weights};

use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintMatrix;
use crate::error::{Error, Result};

/// Weight-stabilization policy: cap weights at 1/a_n via
/// 1/w~ = 1/w + a_n, then renormalize.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Stabilization {
    /// a_n = 12 log n.
    Auto,
    /// Explicit a_n > 0.
    Fixed(f64),
}

impl Stabilization {
    pub fn a_n(&self, n: usize) -> f64 {
        match self {
            Stabilization::Auto => 12.0 * (n as f64).ln(),
            Stabilization::Fixed(a) => *a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    /// Cressie-Read index: -1 empirical likelihood, 0 entropy balancing,
    /// 1 least squares.
    pub gamma: f64,
    /// Max-norm tolerance on the estimating-equation residual.
    pub tol: f64,
    pub max_iter: usize,
    pub stabilization: Option<Stabilization>,
    /// Verify hull membership before solving. Callers that know their
    /// targets are interior (e.g. the simulation harness at scale) may
    /// disable the check.
    pub check_feasibility: bool,
}

impl CalibrationConfig {
    pub fn new(gamma: f64) -> Self {
        CalibrationConfig {
            gamma,
            tol: 1e-10,
            max_iter: 200,
            stabilization: None,
            check_feasibility: true,
        }
    }

    pub fn with_stabilization(mut self, s: Option<Stabilization>) -> Self {
        self.stabilization = s;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Parse(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Parse("max_iter must be at least 1".into()));
        }
        if let Some(Stabilization::Fixed(a)) = self.stabilization {
            if !(a > 0.0) {
                return Err(Error::Parse(format!("a_n must be positive, got {a}")));
            }
        }
        Ok(())
    }
}

/// Solved calibration weights with diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightSolution {
    /// Lagrange multiplier of the balancing constraints.
    pub lambda_hat: Vec<f64>,
    /// Normalized weights, sum one.
    pub weights: Vec<f64>,
    /// W_i = n w_i, the density-ratio scale.
    #[serde(rename = "W")]
    pub w_big: Vec<f64>,
    /// Max-norm of the estimating equation at lambda_hat.
    pub residual: f64,
    /// Max-norm of the weighted constraint sum (before stabilization).
    pub constraint_residual: f64,
    pub feasible: bool,
    /// Any weight negative; possible only for gamma > 0.
    pub has_negative: bool,
    pub stabilized: bool,
}

impl WeightSolution {
    pub fn n(&self) -> usize {
        self.weights.len()
    }

    /// Uniform weights: the "no calibration" solution.
    pub fn uniform(n: usize) -> Self {
        WeightSolution {
            lambda_hat: Vec::new(),
            weights: vec![1.0 / n as f64; n],
            w_big: vec![1.0; n],
            residual: 0.0,
            constraint_residual: 0.0,
            feasible: true,
            has_negative: false,
            stabilized: false,
        }
    }
}

/// End-to-end calibration: feasibility check, dual solve, weight
/// evaluation, optional stabilization.
pub fn calibrate(g: &ConstraintMatrix, config: &CalibrationConfig) -> Result<WeightSolution> {
    config.validate()?;
    if config.check_feasibility {
        let report = check_feasibility(g);
        if !report.feasible {
            if config.gamma > 0.0 {
                // The least-squares weights exist even outside the hull
                // (they go negative); warn and continue.
                log::warn!(
                    "calibration targets lie outside the convex hull (margin {:.3e}); \
                     gamma = {} proceeds with possibly negative weights",
                    report.margin,
                    config.gamma
                );
            } else {
                return Err(Error::Infeasible {
                    reason: match report.separating_direction {
                        Some(v) => format!(
                            "targets outside the convex hull (margin {:.3e}, separating direction {:?})",
                            report.margin, v
                        ),
                        None => format!("targets on the hull boundary (margin {:.3e})", report.margin),
                    },
                });
            }
        }
    }
    let (lambda, residual, _iters) = solve_lambda(g, config)?;
    let mut sol = compute_weights(g, &lambda, config, residual, true)?;
    if let Some(stab) = config.stabilization {
        let a_n = stab.a_n(g.n());
        let capped = stabilize_weights(&sol.weights, a_n)?;
        let nf = g.n() as f64;
        if capped != sol.weights {
            sol.stabilized = true;
            sol.w_big = capped.iter().map(|w| w * nf).collect();
            sol.weights = capped;
        }
    }
    Ok(sol)
}
