//! Additive kernel smoother for the propensity score (one-step marginal
//! fit, no backfitting): pi(x) = abar + sum_j {m_j(x_j) - abar}, where
//! m_j is a Gaussian Nadaraya-Watson smooth of A on the j-th covariate
//! with the normal-reference bandwidth 1.06 sigma_j n^{-1/5}.

use serde::{Deserialize, Serialize};

use crate::data::SourceSample;
use crate::error::{Error, Result};

const SQRT_2PI: f64 = 2.5066282746310002;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelPropensity {
    /// Training covariate columns, one Vec per retained component.
    columns: Vec<Vec<f64>>,
    /// Original covariate index of each retained component.
    component_index: Vec<usize>,
    bandwidths: Vec<f64>,
    a: Vec<f64>,
    abar: f64,
    /// Covariates dropped for zero variance.
    pub dropped: Vec<usize>,
    p: usize,
}

impl KernelPropensity {
    pub fn fit(sample: &SourceSample) -> Result<Self> {
        let n = sample.n();
        if n < 20 {
            return Err(Error::TooFewRows { n, min: 20 });
        }
        let p = sample.p();
        let a: Vec<f64> = sample.a.iter().map(|v| *v as f64).collect();
        let abar = a.iter().sum::<f64>() / n as f64;
        let mut columns = Vec::new();
        let mut component_index = Vec::new();
        let mut bandwidths = Vec::new();
        let mut dropped = Vec::new();
        for j in 0..p {
            let col: Vec<f64> = (0..n).map(|i| sample.x[[i, j]]).collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            if var <= 0.0 {
                dropped.push(j + 1);
                continue;
            }
            bandwidths.push(1.06 * var.sqrt() * (n as f64).powf(-0.2));
            columns.push(col);
            component_index.push(j);
        }
        Ok(KernelPropensity { columns, component_index, bandwidths, a, abar, dropped, p })
    }

    /// Clipped prediction in [0.01, 0.99].
    pub fn predict(&self, x_row: &[f64]) -> f64 {
        debug_assert_eq!(x_row.len(), self.p);
        let mut pi = self.abar;
        for (c, (col, h)) in self.columns.iter().zip(&self.bandwidths).enumerate() {
            let xj = x_row[self.component_index[c]];
            let mut num = 0.0;
            let mut den = 0.0;
            for (xi, ai) in col.iter().zip(&self.a) {
                let u = (xj - xi) / h;
                let k = (-0.5 * u * u).exp() / (SQRT_2PI * h);
                num += k * ai;
                den += k;
            }
            if den > 1e-300 {
                pi += num / den - self.abar;
            }
        }
        pi.clamp(0.01, 0.99)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    use crate::nuisance::logistic::expit;

    #[test]
    fn independent_treatment_stays_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 2000;
        let mut x = Array2::zeros((n, 2));
        let mut a = Vec::with_capacity(n);
        for i in 0..n {
            x[[i, 0]] = rng.random::<f64>() * 2.0 - 1.0;
            x[[i, 1]] = rng.random::<f64>() * 2.0 - 1.0;
            a.push(if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 });
        }
        let s = SourceSample::new(x, a, vec![1.0; n]).unwrap();
        let fit = KernelPropensity::fit(&s).unwrap();
        for t in [-0.5, 0.0, 0.5] {
            let pi = fit.predict(&[t, t]);
            assert!((0.4..=0.6).contains(&pi), "pi({t}) = {pi}");
        }
    }

    #[test]
    fn predictions_are_clipped() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 60;
        let mut x = Array2::zeros((n, 1));
        let mut a = Vec::with_capacity(n);
        for i in 0..n {
            let v = i as f64 / 10.0;
            x[[i, 0]] = v;
            a.push(if i % 20 == 0 { 0.0 } else { 1.0 });
            let _ = rng.random::<f64>();
        }
        let s = SourceSample::new(x, a, vec![1.0; n]).unwrap();
        let fit = KernelPropensity::fit(&s).unwrap();
        for t in [-100.0, 0.0, 3.0, 100.0] {
            let pi = fit.predict(&[t]);
            assert!((0.01..=0.99).contains(&pi));
        }
    }

    #[test]
    fn degenerate_covariate_is_dropped() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 50;
        let mut x = Array2::zeros((n, 2));
        let mut a = Vec::with_capacity(n);
        for i in 0..n {
            x[[i, 0]] = 1.0; // constant column
            x[[i, 1]] = rng.random::<f64>();
            a.push(if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 });
        }
        let s = SourceSample::new(x, a, vec![1.0; n]).unwrap();
        let fit = KernelPropensity::fit(&s).unwrap();
        assert_eq!(fit.dropped, vec![1]);
        assert!(fit.predict(&[1.0, 0.5]).is_finite());
    }

    #[test]
    fn beats_constant_predictor_on_additive_truth() {
        // Observational design: logit pi = 0.5 x1 - 0.5 x2 + 0.5 x3.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 2000;
        let mut x = Array2::zeros((n, 3));
        let mut a = Vec::with_capacity(n);
        let mut truth = Vec::with_capacity(n);
        for i in 0..n {
            let x1 = if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
            let x2 = rng.random::<f64>() * 4.0 - 2.0;
            let x3 = rng.random::<f64>() * 4.0 - 2.0;
            x[[i, 0]] = x1;
            x[[i, 1]] = x2;
            x[[i, 2]] = x3;
            let pi = expit(0.5 * x1 - 0.5 * x2 + 0.5 * x3);
            truth.push(pi);
            a.push(if rng.random::<f64>() < pi { 1.0 } else { 0.0 });
        }
        let abar = a.iter().sum::<f64>() / n as f64;
        let s = SourceSample::new(x, a, vec![1.0; n]).unwrap();
        let fit = KernelPropensity::fit(&s).unwrap();
        let mut ise_fit = 0.0;
        let mut ise_const = 0.0;
        for i in 0..n {
            let pi = fit.predict(&s.row(i));
            ise_fit += (pi - truth[i]).powi(2);
            ise_const += (abar - truth[i]).powi(2);
        }
        assert!(ise_fit < ise_const, "kernel {ise_fit} vs constant {ise_const}");
    }
}
