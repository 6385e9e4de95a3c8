//! Plug-in influence-function variance for the AIPW value estimators.
//!
//! The estimator's influence function has up to four parts: the weighted
//! pseudo-outcome itself (xi1), the contribution of the estimated
//! calibration multiplier (xi2), and — when the nuisances are parametric —
//! the contributions of the outcome coefficients (xi3) and the propensity
//! coefficients (xi4). With nonparametric nuisances satisfying the usual
//! rate condition, only xi1 and xi2 enter.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::calibration::WeightSolution;
use crate::constraints::ConstraintMatrix;
use crate::data::{LinearRule, SourceSample};
use crate::error::{Error, Result};
use crate::linalg;
use crate::nuisance::{design_row, LinearOutcomeFit, LogisticFit, Mode, NuisanceFit};

use super::PsiTable;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InfluenceComponents {
    pub xi1: Vec<f64>,
    pub xi2: Option<Vec<f64>>,
    pub xi3: Option<Vec<f64>>,
    pub xi4: Option<Vec<f64>>,
}

impl InfluenceComponents {
    /// Row sums xi_i1 + xi_i2 + xi_i3 + xi_i4.
    pub fn totals(&self) -> Vec<f64> {
        let mut t = self.xi1.clone();
        for part in [&self.xi2, &self.xi3, &self.xi4].into_iter().flatten() {
            for (acc, v) in t.iter_mut().zip(part) {
                *acc += v;
            }
        }
        t
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub value: f64,
    pub se: f64,
    pub components: InfluenceComponents,
    pub mode: Mode,
    pub rule: LinearRule,
    pub n: usize,
}

impl ValueEstimate {
    /// 95% Wald interval.
    pub fn wald_interval(&self) -> (f64, f64) {
        (self.value - 1.96 * self.se, self.value + 1.96 * self.se)
    }
}

/// H_lambda and G_lambda: the multiplier block of the influence function.
pub struct LambdaParts {
    pub h: Array1<f64>,
    pub g: Array2<f64>,
    /// rho[lambda' G_i] per observation.
    pub rho: Vec<f64>,
}

/// Derivative dW_i/dlambda of the normalized weight, full quotient rule:
///
///   dW_i/dlambda = n rho'_i G_i / T - W_i U / T,
///
/// with T = sum_j rho_j and U = sum_j rho'_j G_j. At lambda = 0 this
/// collapses to the centered constraint row G_i - mean(G).
pub fn lambda_parts(
    g: &ConstraintMatrix,
    gamma: f64,
    lambda: &[f64],
    psi: &[f64],
) -> Result<LambdaParts> {
    let (n, q) = (g.n(), g.q());
    if lambda.len() != q {
        return Err(Error::LengthMismatch {
            what: "lambda vs constraints".into(),
            expected: q,
            got: lambda.len(),
        });
    }
    let nf = n as f64;
    let mut rho = Vec::with_capacity(n);
    let mut rho_p = Vec::with_capacity(n);
    let mut total = 0.0;
    let mut u = vec![0.0; q];
    for i in 0..n {
        let mut t = 0.0;
        for k in 0..q {
            t += lambda[k] * g.g[[i, k]];
        }
        let r = crate::calibration::rho(t, gamma)?;
        let rp = crate::calibration::rho_prime(t, gamma)?;
        total += r;
        for k in 0..q {
            u[k] += rp * g.g[[i, k]];
        }
        rho.push(r);
        rho_p.push(rp);
    }

    let mut h = Array1::zeros(q);
    let mut gmat = Array2::zeros((q, q));
    for i in 0..n {
        let w_raw = nf * rho[i] / total;
        for k in 0..q {
            let dwk = (nf * rho_p[i] * g.g[[i, k]] - w_raw * u[k]) / total;
            h[k] += dwk * psi[i];
        }
        for a in 0..q {
            for b in a..q {
                gmat[[a, b]] -= rho_p[i] * g.g[[i, a]] * g.g[[i, b]];
            }
        }
    }
    for a in 0..q {
        for b in 0..a {
            gmat[[a, b]] = gmat[[b, a]];
        }
    }
    h.mapv_inplace(|v| v / nf);
    gmat.mapv_inplace(|v| v / nf);
    Ok(LambdaParts { h, g: gmat, rho })
}

/// H_theta and G_theta for the linear outcome block.
pub struct ThetaParts {
    pub h: Array1<f64>,
    pub g: Array2<f64>,
}

pub fn theta_parts(
    sample: &SourceSample,
    lin: &LinearOutcomeFit,
    decisions: &[u8],
    w_big: &[f64],
    pi: &[f64],
) -> ThetaParts {
    let n = sample.n();
    let d = lin.dim();
    let mut h = Array1::zeros(d);
    for i in 0..n {
        let di = decisions[i];
        let rho = if sample.a[i] == 1 { pi[i] } else { 1.0 - pi[i] };
        let ind = (sample.a[i] == di) as u8 as f64;
        // dpsi/dtheta = (1 - I{a=d}/rho) z(x, d)
        let f = w_big[i] * (1.0 - ind / rho);
        let z = design_row(&sample.row(i), di as f64);
        for j in 0..d {
            h[j] += f * z[j];
        }
    }
    h.mapv_inplace(|v| v / n as f64);
    ThetaParts { h, g: lin.information(sample) }
}

/// H_eta and G_eta for the logistic propensity block.
pub struct EtaParts {
    pub h: Array1<f64>,
    pub g: Array2<f64>,
}

pub fn eta_parts(
    sample: &SourceSample,
    logit: &LogisticFit,
    decisions: &[u8],
    w_big: &[f64],
    pi: &[f64],
    mu0: &[f64],
    mu1: &[f64],
) -> EtaParts {
    let n = sample.n();
    let d = logit.dim();
    let mut h = Array1::zeros(d);
    for i in 0..n {
        let di = decisions[i];
        if sample.a[i] != di {
            continue; // indicator kills the only eta-dependent term
        }
        let row = sample.row(i);
        let rho = if sample.a[i] == 1 { pi[i] } else { 1.0 - pi[i] };
        let mu_d = if di == 1 { mu1[i] } else { mu0[i] };
        // dpsi/drho = -(y - mu_d)/rho^2; drho/deta = (2a - 1) pi(1-pi) x~
        let pim = logit.predict(&row);
        let sign = 2.0 * sample.a[i] as f64 - 1.0;
        let f = w_big[i] * (-(sample.y[i] - mu_d) / (rho * rho)) * sign * pim * (1.0 - pim);
        h[0] += f;
        for j in 0..row.len() {
            h[j + 1] += f * row[j];
        }
    }
    h.mapv_inplace(|v| v / n as f64);
    EtaParts { h, g: logit.information(sample) }
}

/// Full value estimate with plug-in standard error.
///
/// `weights` selects the calibrated estimator (original when absent);
/// `calibration` supplies the constraint matrix and gamma so the
/// multiplier contribution xi2 can be formed. With parametric nuisances
/// the outcome/propensity score contributions xi3, xi4 are added.
pub fn estimate_value(
    sample: &SourceSample,
    rule: &LinearRule,
    fit: &NuisanceFit,
    weights: Option<&WeightSolution>,
    calibration: Option<(&ConstraintMatrix, f64)>,
) -> Result<ValueEstimate> {
    let preds = fit.predictions(sample);
    estimate_value_with(sample, rule, fit, &preds, weights, calibration)
}

/// As [`estimate_value`] but with precomputed nuisance predictions, so
/// callers evaluating several estimators on one sample pay for the model
/// evaluations once.
pub fn estimate_value_with(
    sample: &SourceSample,
    rule: &LinearRule,
    fit: &NuisanceFit,
    preds: &crate::nuisance::NuisancePredictions,
    weights: Option<&WeightSolution>,
    calibration: Option<(&ConstraintMatrix, f64)>,
) -> Result<ValueEstimate> {
    let n = sample.n();
    let nf = n as f64;
    let decisions = rule.decide_all(&sample.x)?;
    let psi_tab = PsiTable::build(sample, preds);
    let psi: Vec<f64> = psi_tab.select(&decisions);

    let w_big: Vec<f64> = match weights {
        Some(w) => {
            if w.weights.len() != n {
                return Err(Error::LengthMismatch {
                    what: "calibration weights".into(),
                    expected: n,
                    got: w.weights.len(),
                });
            }
            w.w_big.clone()
        }
        None => vec![1.0; n],
    };

    let value = psi.iter().zip(&w_big).map(|(p, w)| p * w).sum::<f64>() / nf;

    let xi1: Vec<f64> = psi.iter().zip(&w_big).map(|(p, w)| p * w - value).collect();

    let xi2 = match (weights, calibration) {
        (Some(w), Some((g, gamma))) if !w.lambda_hat.is_empty() => {
            let parts = lambda_parts(g, gamma, &w.lambda_hat, &psi)?;
            let a = linalg::solve_symmetrized(&parts.g, &parts.h, "G_lambda")?;
            let mut xi2 = Vec::with_capacity(n);
            for i in 0..n {
                let mut s = 0.0;
                for k in 0..g.q() {
                    s += a[k] * g.g[[i, k]];
                }
                xi2.push(s * parts.rho[i]);
            }
            Some(xi2)
        }
        _ => None,
    };

    let (xi3, xi4) = if fit.mode == Mode::ParametricI {
        let lin = fit.linear_outcome().expect("parametric mode carries a linear outcome");
        let logit = fit.logistic().expect("parametric mode carries a logistic propensity");

        let tp = theta_parts(sample, lin, &decisions, &w_big, &preds.pi);
        let b = linalg::solve_symmetrized(&tp.g, &tp.h, "G_theta")?;
        let mut xi3 = Vec::with_capacity(n);
        for i in 0..n {
            let c = lin.moment(&sample.row(i), sample.a[i], sample.y[i]);
            xi3.push(b.iter().zip(&c).map(|(x, y)| x * y).sum());
        }

        let ep = eta_parts(sample, logit, &decisions, &w_big, &preds.pi, &preds.mu0, &preds.mu1);
        let c = linalg::solve_symmetrized(&ep.g, &ep.h, "G_eta")?;
        let mut xi4 = Vec::with_capacity(n);
        for i in 0..n {
            let s = logit.score(&sample.row(i), sample.a[i]);
            xi4.push(c.iter().zip(&s).map(|(x, y)| x * y).sum());
        }
        (Some(xi3), Some(xi4))
    } else {
        (None, None)
    };

    let components = InfluenceComponents { xi1, xi2, xi3, xi4 };
    let totals = components.totals();
    let sigma2 = totals.iter().map(|v| v * v).sum::<f64>() / nf;
    let se = (sigma2 / nf).sqrt();

    Ok(ValueEstimate { value, se, components, mode: fit.mode, rule: rule.clone(), n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{calibrate, CalibrationConfig};
    use crate::constraints::{build_constraint_matrix, ConstraintSpec};
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
            y.push(1.0 + x1 - 0.5 * x2 + ai * (0.5 + x2) + rng.random::<f64>() - 0.5);
        }
        SourceSample::new(x, a, y).unwrap()
    }

    #[test]
    fn degenerate_sample_has_zero_se() {
        // Constant outcome, exact fits, lambda = 0: every xi vanishes.
        let mut s = sample(80, 3);
        for i in 0..s.n() {
            s.y[i] = 2.0;
        }
        let fit = NuisanceFit::fit_parametric(&s).unwrap();
        let rule = LinearRule::new(vec![0.0, 1.0, 0.0]).unwrap();
        // centered constraints -> lambda = 0, uniform weights
        let spec = ConstraintSpec::covariate_means(&crate::constraints::empirical_moments(
            &s,
            &[
                crate::constraints::MomentDescriptor::Mean { index: 1 },
                crate::constraints::MomentDescriptor::Mean { index: 2 },
            ],
        )
        .unwrap())
        .unwrap();
        let g = build_constraint_matrix(&s, &spec).unwrap();
        let w = calibrate(&g, &CalibrationConfig::new(0.0)).unwrap();
        let est = estimate_value(&s, &rule, &fit, Some(&w), Some((&g, 0.0))).unwrap();
        assert!((est.value - 2.0).abs() < 1e-9);
        // xi1 and xi3 vanish exactly; xi4 vanishes because y - mu_d = 0
        assert!(est.se < 1e-9, "se {}", est.se);
    }

    #[test]
    fn se_identity_holds() {
        let s = sample(150, 9);
        let fit = NuisanceFit::fit_parametric(&s).unwrap();
        let rule = LinearRule::new(vec![0.1, 0.7, -0.7]).unwrap();
        let est = estimate_value(&s, &rule, &fit, None, None).unwrap();
        let totals = est.components.totals();
        let sigma2 = totals.iter().map(|v| v * v).sum::<f64>() / s.n() as f64;
        assert!((est.se * est.se * s.n() as f64 - sigma2).abs() <= 1e-10 * sigma2.max(1.0));
    }

    #[test]
    fn nonparametric_mode_without_weights_is_empirical_variance_of_psi() {
        let s = sample(100, 11);
        let fit = NuisanceFit::fit_nonparametric(&s, 7).unwrap();
        let rule = LinearRule::new(vec![0.2, -0.4, 0.8]).unwrap();
        let est = estimate_value(&s, &rule, &fit, None, None).unwrap();
        assert!(est.components.xi2.is_none());
        assert!(est.components.xi3.is_none());
        assert!(est.components.xi4.is_none());
        let preds = fit.predictions(&s);
        let d = rule.decide_all(&s.x).unwrap();
        let psi: Vec<f64> = (0..s.n())
            .map(|i| super::super::psi(s.y[i], s.a[i], preds.pi[i], preds.mu0[i], preds.mu1[i], d[i]))
            .collect();
        let vbar = psi.iter().sum::<f64>() / s.n() as f64;
        let nf = s.n() as f64;
        let se2 = psi.iter().map(|p| (p - vbar) * (p - vbar)).sum::<f64>() / (nf * nf);
        assert!((est.se * est.se - se2).abs() < 1e-12);
    }

    #[test]
    fn dw_dlambda_at_zero_is_centered_constraint_row() {
        // Closed form at lambda = 0: dW_i/dlambda = G_i - mean(G).
        let s = sample(60, 21);
        let spec = ConstraintSpec::covariate_means(&[0.1, -0.2]).unwrap();
        let g = build_constraint_matrix(&s, &spec).unwrap();
        let psi: Vec<f64> = (0..s.n()).map(|i| (i % 7) as f64 - 3.0).collect();
        let parts = lambda_parts(&g, 0.0, &[0.0, 0.0], &psi).unwrap();
        // H should equal n^-1 sum (G_i - Gbar) psi_i
        let n = s.n();
        let mut gbar = [0.0; 2];
        for i in 0..n {
            gbar[0] += g.g[[i, 0]];
            gbar[1] += g.g[[i, 1]];
        }
        gbar[0] /= n as f64;
        gbar[1] /= n as f64;
        let mut expect = [0.0; 2];
        for i in 0..n {
            expect[0] += (g.g[[i, 0]] - gbar[0]) * psi[i];
            expect[1] += (g.g[[i, 1]] - gbar[1]) * psi[i];
        }
        expect[0] /= n as f64;
        expect[1] /= n as f64;
        assert!((parts.h[0] - expect[0]).abs() < 1e-12);
        assert!((parts.h[1] - expect[1]).abs() < 1e-12);
    }
}
