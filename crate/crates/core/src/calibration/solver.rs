//! Dual solver for the calibration weights.
//!
//! The weights minimize a Cressie-Read divergence from uniform subject to
//! the balancing constraints. Their dual characterization is a q-variable
//! estimating equation
//!
//!   sum_i rho[lambda' G_i] G_i = 0,
//!
//! solved here by damped Newton with a backtracking line search that never
//! leaves the domain of rho, initialized at lambda = 0. The antiderivative
//! of rho supplies a convex merit function, so accepted steps always
//! decrease it. For gamma = 1 the equation is linear and Newton converges
//! in a single step (the same solution as the equality-constrained QP).

use ndarray::{Array1, Array2};

use super::rho::{in_domain, rho_antideriv, rho_prime_unchecked, rho_unchecked};
use super::{CalibrationConfig, WeightSolution};
use crate::constraints::ConstraintMatrix;
use crate::error::{Error, Result};
use crate::linalg;

/// Compensated (Kahan) summation; the weight invariants are tight enough
/// that naive accumulation over 1e5 terms would eat the budget.
#[derive(Clone)]
pub(crate) struct KahanSum {
    s: f64,
    c: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        KahanSum { s: 0.0, c: 0.0 }
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let y = v - self.c;
        let t = self.s + y;
        self.c = (t - self.s) - y;
        self.s = t;
    }

    pub fn value(&self) -> f64 {
        self.s
    }
}

/// Estimating-equation value (the full sum, not the mean) and merit.
fn equation_and_merit(g: &ConstraintMatrix, lambda: &Array1<f64>, gamma: f64) -> (Array1<f64>, f64) {
    let (n, q) = (g.n(), g.q());
    let mut eq = vec![KahanSum::new(); q];
    let mut merit = KahanSum::new();
    for i in 0..n {
        let mut t = 0.0;
        for k in 0..q {
            t += lambda[k] * g.g[[i, k]];
        }
        let r = rho_unchecked(t, gamma);
        merit.add(rho_antideriv(t, gamma));
        for k in 0..q {
            eq[k].add(r * g.g[[i, k]]);
        }
    }
    (Array1::from_iter(eq.iter().map(|s| s.value())), merit.value())
}

fn jacobian(g: &ConstraintMatrix, lambda: &Array1<f64>, gamma: f64) -> Array2<f64> {
    let (n, q) = (g.n(), g.q());
    let mut j = Array2::zeros((q, q));
    for i in 0..n {
        let mut t = 0.0;
        for k in 0..q {
            t += lambda[k] * g.g[[i, k]];
        }
        let rp = rho_prime_unchecked(t, gamma);
        for a in 0..q {
            let ga = g.g[[i, a]];
            for b in a..q {
                j[[a, b]] += rp * ga * g.g[[i, b]];
            }
        }
    }
    for a in 0..q {
        for b in 0..a {
            j[[a, b]] = j[[b, a]];
        }
    }
    j
}

fn all_in_domain(g: &ConstraintMatrix, lambda: &Array1<f64>, gamma: f64) -> Option<f64> {
    for i in 0..g.n() {
        let mut t = 0.0;
        for k in 0..g.q() {
            t += lambda[k] * g.g[[i, k]];
        }
        if !in_domain(t, gamma) {
            return Some(t);
        }
    }
    None
}

/// Solve for the Lagrange multiplier. Returns the multiplier, the final
/// residual (max-norm of the estimating equation) and iteration count.
pub fn solve_lambda(
    g: &ConstraintMatrix,
    config: &CalibrationConfig,
) -> Result<(Array1<f64>, f64, usize)> {
    let q = g.q();
    let gamma = config.gamma;
    if gamma == 1.0 {
        return solve_lambda_least_squares(g, config);
    }
    let mut lambda = Array1::zeros(q);
    let (mut eq, mut merit) = equation_and_merit(g, &lambda, gamma);
    let mut residual = linalg::max_abs(&eq);

    for iter in 0..config.max_iter {
        if residual <= config.tol {
            return Ok((lambda, residual, iter));
        }
        let j = jacobian(g, &lambda, gamma);
        let step = linalg::solve(&j, &eq, "G_lambda")?;

        // Backtracking: halve until the iterate stays in the domain and
        // the merit decreases.
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha >= 1e-16 {
            let cand = &lambda - &(alpha * &step);
            if let Some(bad) = all_in_domain(g, &cand, gamma) {
                if alpha == 1.0 && iter == 0 && step.iter().all(|v| v.abs() < 1e30) {
                    // remember the offending argument for the error path
                    let _ = bad;
                }
                alpha *= 0.5;
                continue;
            }
            let (eq_c, merit_c) = equation_and_merit(g, &cand, gamma);
            if merit_c <= merit - 1e-4 * alpha * step.dot(&eq).abs()
                || linalg::max_abs(&eq_c) < residual
            {
                lambda = cand;
                eq = eq_c;
                merit = merit_c;
                residual = linalg::max_abs(&eq);
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            let bad = all_in_domain(g, &(&lambda - &step), gamma).unwrap_or(f64::NAN);
            return Err(Error::DomainViolation { x: bad, gamma });
        }
    }
    if residual <= config.tol {
        return Ok((lambda, residual, config.max_iter));
    }
    Err(Error::NotConverged { residual, tol: config.tol, iters: config.max_iter })
}

/// gamma = 1: the estimating equation is linear in lambda, and the
/// solution may leave the rho domain (negative weights are admissible),
/// so solve the KKT system directly instead of iterating with domain
/// checks. Matches the equality-constrained QP solution.
fn solve_lambda_least_squares(
    g: &ConstraintMatrix,
    config: &CalibrationConfig,
) -> Result<(Array1<f64>, f64, usize)> {
    let (n, q) = (g.n(), g.q());
    let mut sum_g = Array1::zeros(q);
    let mut gram = Array2::zeros((q, q));
    for i in 0..n {
        for a in 0..q {
            let ga = g.g[[i, a]];
            sum_g[a] += ga;
            for b in a..q {
                gram[[a, b]] += ga * g.g[[i, b]];
            }
        }
    }
    for a in 0..q {
        for b in 0..a {
            gram[[a, b]] = gram[[b, a]];
        }
    }
    let lambda = -linalg::solve(&gram, &sum_g, "G_lambda")?;
    // residual of sum_i (1 + lambda' g_i) g_i = sum_g + gram lambda
    let eq = &sum_g + &gram.dot(&lambda);
    let residual = linalg::max_abs(&eq);
    if residual > config.tol.max(1e-8 * linalg::max_abs(&sum_g).max(1.0)) {
        return Err(Error::NotConverged { residual, tol: config.tol, iters: 1 });
    }
    Ok((lambda, residual, 1))
}

/// Evaluate the normalized weights at a multiplier.
pub fn compute_weights(
    g: &ConstraintMatrix,
    lambda: &Array1<f64>,
    config: &CalibrationConfig,
    residual: f64,
    converged: bool,
) -> Result<WeightSolution> {
    let (n, q) = (g.n(), g.q());
    let gamma = config.gamma;
    let mut rho_vals = Vec::with_capacity(n);
    let mut total = KahanSum::new();
    for i in 0..n {
        let mut t = 0.0;
        for k in 0..q {
            t += lambda[k] * g.g[[i, k]];
        }
        // gamma = 1 tolerates rho < 0 (negative weights); other gammas
        // must stay inside the domain.
        if gamma != 1.0 && !in_domain(t, gamma) {
            return Err(Error::DomainViolation { x: t, gamma });
        }
        let r = if gamma == 1.0 { 1.0 + t } else { rho_unchecked(t, gamma) };
        rho_vals.push(r);
        total.add(r);
    }
    let total = total.value();
    let mut weights: Vec<f64> = rho_vals.iter().map(|r| r / total).collect();
    renormalize(&mut weights);

    let nf = n as f64;
    let has_negative = weights.iter().any(|w| *w < 0.0);
    let mut cres = vec![KahanSum::new(); q];
    for (i, w) in weights.iter().enumerate() {
        for k in 0..q {
            cres[k].add(w * g.g[[i, k]]);
        }
    }
    let constraint_residual =
        cres.iter().fold(0.0_f64, |acc, s| acc.max(s.value().abs()));

    Ok(WeightSolution {
        lambda_hat: lambda.to_vec(),
        w_big: weights.iter().map(|w| w * nf).collect(),
        weights,
        residual,
        constraint_residual,
        feasible: converged,
        has_negative,
        stabilized: false,
    })
}

/// Exact renormalization to sum one, with compensated sums.
pub(crate) fn renormalize(weights: &mut [f64]) {
    let mut s = KahanSum::new();
    for w in weights.iter() {
        s.add(*w);
    }
    let s = s.value();
    for w in weights.iter_mut() {
        *w /= s;
    }
}

/// Cap large weights: any w > 1/a_n is replaced by w~ with
/// 1/w~ = 1/w + a_n, then the vector is renormalized to sum one.
pub fn stabilize_weights(weights: &[f64], a_n: f64) -> Result<Vec<f64>> {
    if let Some((i, &w)) = weights.iter().enumerate().find(|(_, w)| **w <= 0.0) {
        return Err(Error::NonPositiveWeight { index: i, value: w });
    }
    let cap = 1.0 / a_n;
    let mut out: Vec<f64> = weights
        .iter()
        .map(|&w| if w > cap { 1.0 / (1.0 / w + a_n) } else { w })
        .collect();
    debug_assert!(out.iter().all(|w| *w <= cap + 1e-15));
    renormalize(&mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::CalibrationConfig;
    use ndarray::array;

    fn cm(col: Vec<f64>) -> ConstraintMatrix {
        let n = col.len();
        let mut g = Array2::zeros((n, 1));
        for (i, v) in col.into_iter().enumerate() {
            g[[i, 0]] = v;
        }
        ConstraintMatrix { g }
    }

    #[test]
    fn zero_column_means_give_zero_lambda() {
        let g = ConstraintMatrix { g: array![[1.0, -0.5], [-1.0, 0.5], [0.0, 0.0]] };
        let cfg = CalibrationConfig::new(0.0);
        let (lambda, residual, iters) = solve_lambda(&g, &cfg).unwrap();
        assert_eq!(iters, 0);
        assert!(residual <= cfg.tol);
        assert!(linalg::max_abs(&lambda) == 0.0);
    }

    #[test]
    fn entropy_balancing_scalar_fixture() {
        // -1.5 e^{-1.5 l} + e^{0.5 l} = 0  =>  l = ln(1.5) / 2
        let g = cm(vec![-1.5, 0.5, 0.5]);
        let cfg = CalibrationConfig::new(0.0);
        let (lambda, _, _) = solve_lambda(&g, &cfg).unwrap();
        assert!((lambda[0] - 1.5_f64.ln() / 2.0).abs() < 1e-10, "lambda {}", lambda[0]);
        let sol = compute_weights(&g, &lambda, &cfg, 0.0, true).unwrap();
        assert!((sol.weights[0] - 0.25).abs() < 1e-9);
        assert!((sol.weights[1] - 0.375).abs() < 1e-9);
        assert!((sol.weights[2] - 0.375).abs() < 1e-9);
        assert!(sol.constraint_residual <= 1e-12);
    }

    #[test]
    fn empirical_likelihood_scalar_fixture() {
        // -1.5/(1 + 1.5 l) + 1/(1 - 0.5 l) = 0  =>  l = 2/9
        let g = cm(vec![-1.5, 0.5, 0.5]);
        let cfg = CalibrationConfig::new(-1.0);
        let (lambda, _, _) = solve_lambda(&g, &cfg).unwrap();
        assert!((lambda[0] - 2.0 / 9.0).abs() < 1e-10, "lambda {}", lambda[0]);
    }

    #[test]
    fn least_squares_is_one_newton_step() {
        let g = cm(vec![-1.5, 0.5, 0.5]);
        let cfg = CalibrationConfig::new(1.0);
        let (lambda, residual, iters) = solve_lambda(&g, &cfg).unwrap();
        assert!(iters <= 1, "linear equation should converge immediately, got {iters}");
        assert!(residual <= cfg.tol);
        // hand solve: sum (1 + l g_i) g_i = 0 => l = -sum g / sum g^2
        let hand = 0.5 / (2.25 + 0.25 + 0.25);
        assert!((lambda[0] - hand).abs() < 1e-12);
    }

    #[test]
    fn stabilization_formula() {
        let w = vec![0.5, 0.25, 0.25];
        let out = stabilize_weights(&w, 4.0).unwrap();
        // pre-normalization: 1/6, 0.25 (=1/4 = cap, untouched), 0.25
        let pre = [1.0 / 6.0, 0.25, 0.25];
        let total: f64 = pre.iter().sum();
        for (o, p) in out.iter().zip(pre.iter()) {
            assert!((o - p / total).abs() < 1e-14);
        }
    }

    #[test]
    fn stabilization_noop_when_under_cap() {
        let w = vec![0.4, 0.3, 0.3];
        let out = stabilize_weights(&w, 2.0).unwrap(); // cap 0.5
        for (a, b) in out.iter().zip(w.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn stabilization_rejects_nonpositive() {
        assert!(matches!(
            stabilize_weights(&[0.5, 0.0, 0.5], 4.0),
            Err(Error::NonPositiveWeight { index: 1, .. })
        ));
    }
}
