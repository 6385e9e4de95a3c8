//! Logistic propensity model fit by iteratively reweighted least squares.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::data::SourceSample;
use crate::error::Result;
use crate::linalg;

#[inline]
pub fn expit(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Fitted logistic regression of treatment on (1, x).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticFit {
    /// Coefficients, intercept first.
    pub eta_hat: Vec<f64>,
    /// Final max-norm of the score sum.
    pub grad_norm: f64,
    /// Data were (quasi-)separable; the fit fell back to a ridge penalty.
    pub separation: bool,
    /// Ridge penalty actually applied (0 when none).
    pub ridge: f64,
}

impl LogisticFit {
    /// Fit by IRLS. Separation is detected by diverging coefficients and
    /// handled by refitting with a ridge of 1e-6, reported in the result.
    pub fn fit(sample: &SourceSample) -> Result<Self> {
        match irls(sample, 0.0) {
            Ok((eta, grad)) => {
                Ok(LogisticFit { eta_hat: eta, grad_norm: grad, separation: false, ridge: 0.0 })
            }
            Err(IrlsFailure::Separation) => {
                let (eta, grad) = irls(sample, 1e-6).map_err(|f| f.into_error())?;
                log::warn!("logistic fit detected separation; refit with ridge 1e-6");
                Ok(LogisticFit { eta_hat: eta, grad_norm: grad, separation: true, ridge: 1e-6 })
            }
            Err(other) => Err(other.into_error()),
        }
    }

    /// Construct from known coefficients (e.g. a true or deliberately
    /// misspecified propensity in validation studies).
    pub fn from_coefficients(eta: Vec<f64>) -> Self {
        LogisticFit { eta_hat: eta, grad_norm: 0.0, separation: false, ridge: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.eta_hat.len()
    }

    /// Linear predictor eta' (1, x).
    pub fn linear_predictor(&self, x_row: &[f64]) -> f64 {
        let mut t = self.eta_hat[0];
        for (v, e) in x_row.iter().zip(&self.eta_hat[1..]) {
            t += v * e;
        }
        t
    }

    /// Unclipped fitted probability.
    pub fn predict(&self, x_row: &[f64]) -> f64 {
        expit(self.linear_predictor(x_row))
    }

    /// Score contribution S(x, a; eta) = (1, x) {a - expit(eta'(1, x))}.
    pub fn score(&self, x_row: &[f64], a: u8) -> Vec<f64> {
        let r = a as f64 - self.predict(x_row);
        let mut s = Vec::with_capacity(self.dim());
        s.push(r);
        for v in x_row {
            s.push(v * r);
        }
        s
    }

    /// Information matrix G_eta = n^-1 sum (1,x)(1,x)' pi (1 - pi).
    pub fn information(&self, sample: &SourceSample) -> Array2<f64> {
        let d = self.dim();
        let n = sample.n();
        let mut g = Array2::zeros((d, d));
        let mut xt = vec![0.0; d];
        for i in 0..n {
            xt[0] = 1.0;
            for j in 0..sample.p() {
                xt[j + 1] = sample.x[[i, j]];
            }
            let pi = expit(self.eta_hat.iter().zip(&xt).map(|(e, v)| e * v).sum());
            let w = pi * (1.0 - pi);
            for a in 0..d {
                for b in a..d {
                    g[[a, b]] += w * xt[a] * xt[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                g[[a, b]] = g[[b, a]];
            }
        }
        g.mapv_into(|v| v / n as f64)
    }
}

enum IrlsFailure {
    Separation,
    Singular(crate::error::Error),
    NotConverged(f64),
}

impl IrlsFailure {
    fn into_error(self) -> crate::error::Error {
        match self {
            IrlsFailure::Separation | IrlsFailure::NotConverged(_) => {
                crate::error::Error::NotConverged { residual: f64::NAN, tol: 1e-8, iters: 100 }
            }
            IrlsFailure::Singular(e) => e,
        }
    }
}

fn irls(sample: &SourceSample, ridge: f64) -> std::result::Result<(Vec<f64>, f64), IrlsFailure> {
    let n = sample.n();
    let d = sample.p() + 1;
    let mut eta = Array1::zeros(d);
    let max_iter = 100;
    let tol = 1e-8;

    let mut xt = vec![0.0; d];
    for _ in 0..max_iter {
        let mut grad = Array1::zeros(d);
        let mut hess: Array2<f64> = Array2::zeros((d, d));
        for i in 0..n {
            xt[0] = 1.0;
            for j in 0..sample.p() {
                xt[j + 1] = sample.x[[i, j]];
            }
            let t: f64 = eta.iter().zip(&xt).map(|(e, v)| e * v).sum();
            let pi = expit(t);
            let r = sample.a[i] as f64 - pi;
            let w = (pi * (1.0 - pi)).max(1e-10);
            for a in 0..d {
                grad[a] += xt[a] * r;
                for b in a..d {
                    hess[[a, b]] += w * xt[a] * xt[b];
                }
            }
        }
        for a in 0..d {
            grad[a] -= ridge * eta[a];
            hess[[a, a]] += ridge;
            for b in 0..a {
                hess[[a, b]] = hess[[b, a]];
            }
        }
        let gnorm = linalg::max_abs(&grad);
        if gnorm <= tol {
            // A vanishing gradient with an extreme linear predictor is the
            // converged face of separation: the likelihood flattens while
            // the coefficients run off.
            if ridge == 0.0 {
                let extreme = (0..n).any(|i| {
                    let mut t: f64 = eta[0];
                    for j in 0..sample.p() {
                        t += eta[j + 1] * sample.x[[i, j]];
                    }
                    t.abs() > 20.0
                });
                if extreme {
                    return Err(IrlsFailure::Separation);
                }
            }
            return Ok((eta.to_vec(), gnorm));
        }
        let step = linalg::solve(&hess, &grad, "G_eta").map_err(IrlsFailure::Singular)?;
        eta = &eta + &step;
        if linalg::max_abs(&eta) > 1e3 && ridge == 0.0 {
            return Err(IrlsFailure::Separation);
        }
    }
    // Monotone deviance descent without gradient convergence is the other
    // face of separation.
    if ridge == 0.0 {
        return Err(IrlsFailure::Separation);
    }
    Err(IrlsFailure::NotConverged(f64::NAN))
}
