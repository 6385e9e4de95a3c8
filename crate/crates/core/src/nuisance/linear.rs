//! Linear outcome model over the design (1, X, A, A*X).
//!
//! This is the working parametric outcome model; against the exponential
//! outcome surface of the validation scenarios it is deliberately
//! misspecified, which is exactly what the double-robustness checks need.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::data::SourceSample;
use crate::error::{Error, Result};
use crate::linalg;

/// Least-squares fit of Y on (1, X, A, A*X).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearOutcomeFit {
    /// Coefficients over (1, X, A, A*X); length 2(p+1).
    pub theta_hat: Vec<f64>,
    pub p: usize,
    /// Max-norm of the normal-equation residual at the solution.
    pub residual: f64,
}

/// Design row z(x, a) = (1, x, a, a*x).
pub fn design_row(x_row: &[f64], a: f64) -> Vec<f64> {
    let p = x_row.len();
    let mut z = Vec::with_capacity(2 * (p + 1));
    z.push(1.0);
    z.extend_from_slice(x_row);
    z.push(a);
    for v in x_row {
        z.push(a * v);
    }
    z
}

impl LinearOutcomeFit {
    pub fn fit(sample: &SourceSample) -> Result<Self> {
        let n = sample.n();
        let p = sample.p();
        let d = 2 * (p + 1);
        let mut gram: Array2<f64> = Array2::zeros((d, d));
        let mut xty: Array1<f64> = Array1::zeros(d);
        for i in 0..n {
            let z = design_row(&sample.row(i), sample.a[i] as f64);
            for a in 0..d {
                xty[a] += z[a] * sample.y[i];
                for b in a..d {
                    gram[[a, b]] += z[a] * z[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                gram[[a, b]] = gram[[b, a]];
            }
        }
        rank_check(&gram)?;
        let theta = linalg::solve(&gram, &xty, "G_theta")
            .map_err(|_| rank_error(&gram))?;
        let residual = linalg::max_abs(&(&gram.dot(&theta) - &xty));
        let scale = linalg::max_abs(&xty).max(1.0);
        if residual > 1e-8 * scale {
            return Err(Error::NotConverged { residual, tol: 1e-8 * scale, iters: 1 });
        }
        Ok(LinearOutcomeFit { theta_hat: theta.to_vec(), p, residual })
    }

    pub fn dim(&self) -> usize {
        self.theta_hat.len()
    }

    /// Predicted mean outcome at covariates x under treatment a.
    pub fn predict(&self, x_row: &[f64], a: f64) -> f64 {
        design_row(x_row, a).iter().zip(&self.theta_hat).map(|(z, t)| z * t).sum()
    }

    /// Moment contribution C(x, a, y; theta) = z (y - z' theta).
    pub fn moment(&self, x_row: &[f64], a: u8, y: f64) -> Vec<f64> {
        let z = design_row(x_row, a as f64);
        let fitted: f64 = z.iter().zip(&self.theta_hat).map(|(zi, t)| zi * t).sum();
        let r = y - fitted;
        z.into_iter().map(|zi| zi * r).collect()
    }

    /// G_theta = n^-1 sum z z' (negative Jacobian of the moment).
    pub fn information(&self, sample: &SourceSample) -> Array2<f64> {
        let d = self.dim();
        let n = sample.n();
        let mut g = Array2::zeros((d, d));
        for i in 0..n {
            let z = design_row(&sample.row(i), sample.a[i] as f64);
            for a in 0..d {
                for b in a..d {
                    g[[a, b]] += z[a] * z[b];
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

    /// Interaction block of the coefficients: the Q-learning contrast
    /// mu(x,1) - mu(x,0) = (1, x') theta_interaction.
    pub fn interaction_block(&self) -> &[f64] {
        &self.theta_hat[self.p + 1..]
    }
}

/// Locate the first near-zero pivot so rank failures carry the offending
/// column.
fn rank_check(gram: &Array2<f64>) -> Result<()> {
    let d = gram.nrows();
    let scale = gram.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())).max(1.0);
    let mut m = gram.clone();
    for k in 0..d {
        let mut p = k;
        let mut best = m[[k, k]].abs();
        for i in (k + 1)..d {
            if m[[i, k]].abs() > best {
                best = m[[i, k]].abs();
                p = i;
            }
        }
        if best <= scale * 1e-12 {
            return Err(Error::RankDeficient { column: k, pivot: best });
        }
        if p != k {
            for j in 0..d {
                m.swap([k, j], [p, j]);
            }
        }
        for i in (k + 1)..d {
            let f = m[[i, k]] / m[[k, k]];
            for j in k..d {
                m[[i, j]] -= f * m[[k, j]];
            }
        }
    }
    Ok(())
}

fn rank_error(gram: &Array2<f64>) -> Error {
    match rank_check(gram) {
        Err(e) => e,
        Ok(()) => Error::RankDeficient { column: 0, pivot: 0.0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_sample(n: usize, p: usize, seed: u64) -> (SourceSample, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::zeros((n, p));
        let mut a = Vec::with_capacity(n);
        for i in 0..n {
            for j in 0..p {
                x[[i, j]] = rng.random::<f64>() * 2.0 - 1.0;
            }
            a.push(if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 });
        }
        let y = vec![0.0; n];
        (SourceSample::new(x, a, y).unwrap(), rng)
    }

    #[test]
    fn exact_recovery_on_linear_truth() {
        let (mut s, _) = random_sample(80, 3, 3);
        let theta: Vec<f64> = vec![1.0, -0.5, 0.25, 2.0, 0.75, 0.1, -0.9, 0.4];
        for i in 0..s.n() {
            let z = design_row(&s.row(i), s.a[i] as f64);
            s.y[i] = z.iter().zip(&theta).map(|(a, b)| a * b).sum();
        }
        let fit = LinearOutcomeFit::fit(&s).unwrap();
        for (est, truth) in fit.theta_hat.iter().zip(&theta) {
            assert!((est - truth).abs() < 1e-10, "est {est} truth {truth}");
        }
    }

    #[test]
    fn moments_sum_to_zero() {
        let (mut s, mut rng) = random_sample(120, 2, 8);
        for i in 0..s.n() {
            s.y[i] = rng.random::<f64>() * 4.0 - 2.0;
        }
        let fit = LinearOutcomeFit::fit(&s).unwrap();
        let mut sum = vec![0.0; fit.dim()];
        for i in 0..s.n() {
            for (acc, v) in sum.iter_mut().zip(fit.moment(&s.row(i), s.a[i], s.y[i])) {
                *acc += v;
            }
        }
        for v in sum {
            assert!(v.abs() < 1e-8, "moment sum {v}");
        }
    }

    #[test]
    fn duplicated_column_is_rank_deficient() {
        let (mut s, mut rng) = random_sample(60, 2, 1);
        for i in 0..s.n() {
            let v = s.x[[i, 0]];
            s.x[[i, 1]] = v; // duplicate covariate
            s.y[i] = rng.random::<f64>();
        }
        assert!(matches!(LinearOutcomeFit::fit(&s), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn matches_qr_oracle() {
        // Independent route: Householder QR on the raw design.
        let (mut s, mut rng) = random_sample(50, 3, 21);
        for i in 0..s.n() {
            s.y[i] = rng.random::<f64>() * 10.0 - 5.0;
        }
        let fit = LinearOutcomeFit::fit(&s).unwrap();
        let oracle = qr_solve(&s);
        for (a, b) in fit.theta_hat.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9, "normal eq {a} vs qr {b}");
        }
    }

    /// Test-only Householder QR least squares.
    fn qr_solve(s: &SourceSample) -> Vec<f64> {
        let n = s.n();
        let d = 2 * (s.p() + 1);
        let mut a = vec![vec![0.0; d]; n];
        let mut b: Vec<f64> = s.y.to_vec();
        for i in 0..n {
            a[i] = design_row(&s.row(i), s.a[i] as f64);
        }
        for k in 0..d {
            let mut norm = 0.0;
            for i in k..n {
                norm += a[i][k] * a[i][k];
            }
            let norm = norm.sqrt();
            let alpha = if a[k][k] > 0.0 { -norm } else { norm };
            let mut v: Vec<f64> = (k..n).map(|i| a[i][k]).collect();
            v[0] -= alpha;
            let vnorm2: f64 = v.iter().map(|x| x * x).sum();
            if vnorm2 < 1e-300 {
                continue;
            }
            for j in k..d {
                let dot: f64 = (k..n).map(|i| v[i - k] * a[i][j]).sum();
                let f = 2.0 * dot / vnorm2;
                for i in k..n {
                    a[i][j] -= f * v[i - k];
                }
            }
            let dot: f64 = (k..n).map(|i| v[i - k] * b[i]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..n {
                b[i] -= f * v[i - k];
            }
        }
        let mut theta = vec![0.0; d];
        for i in (0..d).rev() {
            let mut s_ = b[i];
            for j in (i + 1)..d {
                s_ -= a[i][j] * theta[j];
            }
            theta[i] = s_ / a[i][i];
        }
        theta
    }
}
