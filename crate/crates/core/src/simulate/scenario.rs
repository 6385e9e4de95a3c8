//! Covariate-shift scenario generators and their closed-form quantities.
//!
//! Four source/target covariate designs over X = (X1, X2, X3): a binary
//! X1 and a bivariate normal (X2, X3), conditional on X1 where the target
//! mixes components. The outcome surface is
//!
//!   mu(x, a) = exp{2 - 0.1 x1 - 0.2 x2 + 0.2 x3
//!                  + a * 2 sign(t) / (2 + |t|)},  t = x3 - x2^2 + 1,
//!
//! with sign(0) = 0, and additive N(0, 0.25) outcome noise. Treatments
//! follow either a randomized design (pi = 0.5) or an observational one
//! (logit pi = 0.5 x1 - 0.5 x2 + 0.5 x3).

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSpec;
use crate::data::SourceSample;
use crate::error::{Error, Result};
use crate::nuisance::expit;

pub const N_COVARIATES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    Randomized,
    Observational,
}

impl std::fmt::Display for Design {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Design::Randomized => write!(f, "rand"),
            Design::Observational => write!(f, "obs"),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: u8,
    pub design: Design,
    pub n: usize,
    pub n_target: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(scenario: u8, design: Design, n: usize, seed: u64) -> Result<Self> {
        if !(1..=4).contains(&scenario) {
            return Err(Error::UnsupportedScenario(scenario));
        }
        if n < 50 {
            return Err(Error::TooFewRows { n, min: 50 });
        }
        Ok(ScenarioSpec { scenario, design, n, n_target: 100_000, seed })
    }

    pub fn with_n_target(mut self, n_target: usize) -> Result<Self> {
        if n_target < 10_000 {
            return Err(Error::TooFewRows { n: n_target, min: 10_000 });
        }
        self.n_target = n_target;
        Ok(self)
    }

    /// Covariate-mean summary statistics of the target population
    /// (known exactly, so passed as exact constraint targets).
    pub fn target_means(&self) -> [f64; 3] {
        if self.scenario == 1 {
            [0.5, -1.0, 0.0]
        } else {
            [0.8, 0.6, -0.6]
        }
    }

    /// Balancing constraints on the means of all three covariates.
    pub fn mean_constraints(&self) -> ConstraintSpec {
        ConstraintSpec::covariate_means(&self.target_means()).expect("static spec")
    }

    /// Constraint on the mean of X1 only (subset-calibration studies).
    pub fn x1_constraint(&self) -> ConstraintSpec {
        ConstraintSpec::covariate_means(&self.target_means()[..1]).expect("static spec")
    }
}

const RHO_SIGMA1: f64 = -0.25;
const RHO_SIGMA2: f64 = -0.3;

struct BivariateParams {
    mean: [f64; 2],
    rho: f64,
}

/// Source covariate law per scenario.
fn source_law(scenario: u8) -> (f64, SourceCovariateLaw) {
    match scenario {
        1 => (0.5, SourceCovariateLaw::Unconditional(BivariateParams { mean: [-1.0, 0.0], rho: RHO_SIGMA1 })),
        2 => (0.5, SourceCovariateLaw::Conditional),
        3 => (0.7, SourceCovariateLaw::Unconditional(BivariateParams { mean: [0.1, -0.2], rho: RHO_SIGMA1 })),
        4 => (0.6, SourceCovariateLaw::Unconditional(BivariateParams { mean: [0.0, 0.0], rho: RHO_SIGMA1 })),
        _ => unreachable!("scenario validated at construction"),
    }
}

enum SourceCovariateLaw {
    Unconditional(BivariateParams),
    /// Same components as the target mixture.
    Conditional,
}

/// Target: X1 ~ Bernoulli(p1), then the component indicated by X1.
fn target_p1(scenario: u8) -> f64 {
    if scenario == 1 {
        0.5
    } else {
        0.8
    }
}

fn mixture_component(x1: u8) -> BivariateParams {
    if x1 == 1 {
        BivariateParams { mean: [1.0, -1.0], rho: RHO_SIGMA1 }
    } else {
        BivariateParams { mean: [-1.0, 1.0], rho: RHO_SIGMA2 }
    }
}

fn draw_bivariate(p: &BivariateParams, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    let x2 = p.mean[0] + z1;
    let x3 = p.mean[1] + p.rho * z1 + (1.0 - p.rho * p.rho).sqrt() * z2;
    (x2, x3)
}

/// Noise-free outcome surface.
pub fn mu_outcome(x: &[f64], a: u8) -> f64 {
    let t = x[2] - x[1] * x[1] + 1.0;
    let sign = if t > 0.0 {
        1.0
    } else if t < 0.0 {
        -1.0
    } else {
        0.0
    };
    let effect = if a == 1 { 2.0 * sign / (2.0 + t.abs()) } else { 0.0 };
    (2.0 - 0.1 * x[0] - 0.2 * x[1] + 0.2 * x[2] + effect).exp()
}

/// True propensity under the design.
pub fn true_propensity(design: Design, x: &[f64]) -> f64 {
    match design {
        Design::Randomized => 0.5,
        Design::Observational => expit(0.5 * x[0] - 0.5 * x[1] + 0.5 * x[2]),
    }
}

/// Draw only source covariates (density-ratio studies).
pub fn draw_source_covariates(scenario: u8, n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let (p1, law) = source_law(scenario);
    let mut x = Array2::zeros((n, N_COVARIATES));
    for i in 0..n {
        let x1 = (rng.random::<f64>() < p1) as u8;
        let (x2, x3) = match &law {
            SourceCovariateLaw::Unconditional(p) => draw_bivariate(p, rng),
            SourceCovariateLaw::Conditional => draw_bivariate(&mixture_component(x1), rng),
        };
        x[[i, 0]] = x1 as f64;
        x[[i, 1]] = x2;
        x[[i, 2]] = x3;
    }
    x
}

/// Draw a full source sample: covariates, treatment per design, outcome
/// with N(0, 0.25) noise.
pub fn draw_source(spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> SourceSample {
    let x = draw_source_covariates(spec.scenario, spec.n, rng);
    let mut a = Vec::with_capacity(spec.n);
    let mut y = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let row = [x[[i, 0]], x[[i, 1]], x[[i, 2]]];
        let pi = true_propensity(spec.design, &row);
        let ai = (rng.random::<f64>() < pi) as u8;
        let eps: f64 = rng.sample::<f64, _>(StandardNormal) * 0.5;
        a.push(ai as f64);
        y.push(mu_outcome(&row, ai) + eps);
    }
    SourceSample::new(x, a, y).expect("generator outputs are valid by construction")
}

/// A large target covariate draw with the noise-free outcome surface
/// precomputed under both arms: the target value of any rule is then
/// mean(mu0) + mean(contrast * d).
#[derive(Debug, Clone)]
pub struct TargetDraw {
    pub x: Array2<f64>,
    pub mu0: Vec<f64>,
    pub mu1: Vec<f64>,
    base: f64,
    contrast: Vec<f64>,
}

impl TargetDraw {
    pub fn new(x: Array2<f64>) -> Self {
        let n = x.nrows();
        let mut mu0 = Vec::with_capacity(n);
        let mut mu1 = Vec::with_capacity(n);
        for i in 0..n {
            let row = [x[[i, 0]], x[[i, 1]], x[[i, 2]]];
            mu0.push(mu_outcome(&row, 0));
            mu1.push(mu_outcome(&row, 1));
        }
        let base = mu0.iter().sum::<f64>() / n as f64;
        let contrast = mu0.iter().zip(&mu1).map(|(a, b)| b - a).collect();
        TargetDraw { x, mu0, mu1, base, contrast }
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Noise-free Monte-Carlo value of a rule over this draw.
    pub fn value(&self, rule: &crate::data::LinearRule) -> f64 {
        let beta = rule.beta();
        debug_assert_eq!(beta.len(), N_COVARIATES + 1);
        let mut acc = 0.0;
        for i in 0..self.x.nrows() {
            let t = beta[0]
                + self.x[[i, 0]] * beta[1]
                + self.x[[i, 1]] * beta[2]
                + self.x[[i, 2]] * beta[3];
            if t > 0.0 {
                acc += self.contrast[i];
            }
        }
        self.base + acc / self.n() as f64
    }
}

/// Draw target covariates for a spec.
pub fn draw_target(spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> TargetDraw {
    let p1 = target_p1(spec.scenario);
    let mut x = Array2::zeros((spec.n_target, N_COVARIATES));
    for i in 0..spec.n_target {
        let x1 = (rng.random::<f64>() < p1) as u8;
        let (x2, x3) = if spec.scenario == 1 {
            draw_bivariate(&BivariateParams { mean: [-1.0, 0.0], rho: RHO_SIGMA1 }, rng)
        } else {
            draw_bivariate(&mixture_component(x1), rng)
        };
        x[[i, 0]] = x1 as f64;
        x[[i, 1]] = x2;
        x[[i, 2]] = x3;
    }
    TargetDraw::new(x)
}

/// Simulated data for one replication: the observed source sample plus
/// the target covariate sampler output.
pub struct SimulatedData {
    pub source: SourceSample,
    pub target: TargetDraw,
}

pub fn gen_scenario(spec: &ScenarioSpec) -> SimulatedData {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let target = draw_target(spec, &mut rng);
    let mut rng_s = ChaCha8Rng::seed_from_u64(spec.seed);
    rng_s.set_stream(2);
    let source = draw_source(spec, &mut rng_s);
    SimulatedData { source, target }
}

/// Closed-form density ratio f_t(x) / f_s(x). Scenario 1 is identically
/// one; scenario 2 reduces to 0.4 * 4^{x1}; scenarios 3-4 are a Bernoulli
/// ratio times a normal/mixture-component density ratio.
pub fn true_density_ratio(scenario: u8, x: &[f64]) -> Result<f64> {
    match scenario {
        1 => Ok(1.0),
        2 => Ok(0.4 * 4.0_f64.powf(x[0])),
        3 | 4 => {
            let x1 = if x[0] > 0.5 { 1u8 } else { 0u8 };
            let (p1s, law) = source_law(scenario);
            let p1t = target_p1(scenario);
            let bern = if x1 == 1 { p1t / p1s } else { (1.0 - p1t) / (1.0 - p1s) };
            let target_comp = mixture_component(x1);
            let source_comp = match law {
                SourceCovariateLaw::Unconditional(p) => p,
                SourceCovariateLaw::Conditional => unreachable!("scenarios 3-4 are unconditional"),
            };
            let lr = log_bivariate_density(&target_comp, x[1], x[2])
                - log_bivariate_density(&source_comp, x[1], x[2]);
            Ok(bern * lr.exp())
        }
        other => Err(Error::UnsupportedScenario(other)),
    }
}

/// Log density of N(mean, [[1, rho], [rho, 1]]), quadratic form expanded.
fn log_bivariate_density(p: &BivariateParams, x2: f64, x3: f64) -> f64 {
    let d1 = x2 - p.mean[0];
    let d2 = x3 - p.mean[1];
    let om = 1.0 - p.rho * p.rho;
    let quad = (d1 * d1 - 2.0 * p.rho * d1 * d2 + d2 * d2) / om;
    -0.5 * quad - (std::f64::consts::TAU * om.sqrt()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(scenario: u8) -> ScenarioSpec {
        ScenarioSpec::new(scenario, Design::Observational, 1000, 12345).unwrap()
    }

    #[test]
    fn source_moments_match_design_tables() {
        // Scenario 1 at large n: means (0.5, -1, 0), variances (0.25, 1, 1).
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = draw_source_covariates(1, 100_000, &mut rng);
        let n = x.nrows() as f64;
        for (j, (m, v)) in [(0.5, 0.25), (-1.0, 1.0), (0.0, 1.0)].iter().enumerate() {
            let mean = x.column(j).sum() / n;
            let var = x.column(j).iter().map(|u| (u - mean) * (u - mean)).sum::<f64>() / n;
            assert!((mean - m).abs() < 0.02, "col {j} mean {mean} want {m}");
            assert!((var - v).abs() < 0.02, "col {j} var {var} want {v}");
        }
    }

    #[test]
    fn target_moments_match_design_tables() {
        // Scenarios 2-4 share the target: means (0.8, 0.6, -0.6),
        // variances (0.16, 1.64, 1.64).
        let s = spec(3).with_n_target(100_000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = draw_target(&s, &mut rng);
        let n = t.n() as f64;
        for (j, (m, v)) in [(0.8, 0.16), (0.6, 1.64), (-0.6, 1.64)].iter().enumerate() {
            let mean = t.x.column(j).sum() / n;
            let var = t.x.column(j).iter().map(|u| (u - mean) * (u - mean)).sum::<f64>() / n;
            assert!((mean - m).abs() < 0.02, "col {j} mean {mean} want {m}");
            assert!((var - v).abs() < 0.03, "col {j} var {var} want {v}");
        }
    }

    #[test]
    fn treatment_term_vanishes_on_boundary() {
        // At t = x3 - x2^2 + 1 = 0 both arms coincide.
        let x = [1.0, 1.0, 0.0]; // t = 0 - 1 + 1 = 0
        assert_eq!(mu_outcome(&x, 0), mu_outcome(&x, 1));
    }

    #[test]
    fn scenario2_ratio_closed_form() {
        assert!((true_density_ratio(2, &[0.0, 0.3, -0.2]).unwrap() - 0.4).abs() < 1e-15);
        assert!((true_density_ratio(2, &[1.0, -1.2, 0.8]).unwrap() - 1.6).abs() < 1e-15);
        assert_eq!(true_density_ratio(1, &[1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert!(true_density_ratio(5, &[0.0; 3]).is_err());
    }

    #[test]
    fn scenario3_ratio_matches_density_oracle() {
        // Independent oracle: evaluate both densities from the generic
        // bivariate normal pdf and divide.
        let oracle = |x: &[f64]| -> f64 {
            let pdf = |mean: [f64; 2], rho: f64, u: f64, v: f64| -> f64 {
                let d = [u - mean[0], v - mean[1]];
                let det: f64 = 1.0 - rho * rho;
                let quad = (d[0] * d[0] - 2.0 * rho * d[0] * d[1] + d[1] * d[1]) / det;
                (-0.5 * quad).exp() / (std::f64::consts::TAU * det.sqrt())
            };
            let (ft, fs) = if x[0] > 0.5 {
                (0.8 * pdf([1.0, -1.0], -0.25, x[1], x[2]), 0.7 * pdf([0.1, -0.2], -0.25, x[1], x[2]))
            } else {
                (0.2 * pdf([-1.0, 1.0], -0.3, x[1], x[2]), 0.3 * pdf([0.1, -0.2], -0.25, x[1], x[2]))
            };
            ft / fs
        };
        for x in [[1.0, 0.4, -0.7], [0.0, -0.8, 1.3], [1.0, 2.0, 2.0], [0.0, 0.0, 0.0]] {
            let got = true_density_ratio(3, &x).unwrap();
            let want = oracle(&x);
            assert!(
                (got - want).abs() <= 1e-10 * want.max(1.0),
                "x {x:?}: got {got} want {want}"
            );
        }
    }

    #[test]
    fn generator_is_seed_deterministic() {
        let s = spec(2);
        let a = gen_scenario(&s);
        let b = gen_scenario(&s);
        assert_eq!(a.source, b.source);
        assert_eq!(a.target.x, b.target.x);
    }
}
