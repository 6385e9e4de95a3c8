//! Replication studies: per-replication data generation, weight
//! calibration, nuisance fitting, rule learning, and aggregation into
//! the summary-table layout used throughout the validation studies.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    calibrate, check_feasibility, CalibrationConfig, Stabilization, WeightSolution,
};
use crate::constraints::{build_constraint_matrix, build_constraint_matrix_x, ConstraintSpec};
use crate::data::LinearRule;
use crate::error::{Error, Result};
use crate::nuisance::{Mode, NuisanceFit};
use crate::policy::{ga_optimize, pcd, GaConfig};
use crate::value::{estimate_value_with, ValueSurface};

use super::scenario::{draw_source, draw_source_covariates, true_density_ratio, ScenarioSpec};
use super::truth::{pseudo_truth, source_truth, target_truth};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    /// Entropy balancing (gamma = 0).
    Eb,
    /// Empirical likelihood (gamma = -1), stabilized by default.
    El,
    /// Least squares (gamma = 1).
    Ls,
    /// Original AIPW, no calibration.
    #[serde(rename = "orig")]
    Original,
    /// Q-learning benchmark.
    #[serde(rename = "qlearn")]
    QLearn,
}

impl MethodKind {
    pub fn gamma(&self) -> Option<f64> {
        match self {
            MethodKind::Eb => Some(0.0),
            MethodKind::El => Some(-1.0),
            MethodKind::Ls => Some(1.0),
            MethodKind::Original | MethodKind::QLearn => None,
        }
    }

    /// Default stabilization: empirical likelihood can produce a few
    /// extreme weights, the others do not.
    pub fn stabilization(&self) -> Option<Stabilization> {
        match self {
            MethodKind::El => Some(Stabilization::Auto),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MethodKind::Eb => "eb",
            MethodKind::El => "el",
            MethodKind::Ls => "ls",
            MethodKind::Original => "orig",
            MethodKind::QLearn => "qlearn",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "eb" => Ok(MethodKind::Eb),
            "el" => Ok(MethodKind::El),
            "ls" => Ok(MethodKind::Ls),
            "orig" | "original" => Ok(MethodKind::Original),
            "qlearn" | "q" => Ok(MethodKind::QLearn),
            other => Err(Error::Parse(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RuleSource {
    /// Maximize the (weighted) AIPW value by genetic search.
    Learned,
    /// Evaluate a fixed rule (efficiency comparisons).
    Fixed([f64; 4]),
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub spec: ScenarioSpec,
    pub mode: Mode,
    pub methods: Vec<MethodKind>,
    pub reps: usize,
    pub rule_source: RuleSource,
    pub ga: GaConfig,
    /// Keep per-replication records (plot data).
    pub keep_per_rep: bool,
    /// Draw size behind the pseudo-population truths.
    pub truth_draw: usize,
}

impl StudyConfig {
    pub fn new(spec: ScenarioSpec, mode: Mode, methods: Vec<MethodKind>, reps: usize) -> Self {
        StudyConfig {
            spec,
            mode,
            methods,
            reps,
            rule_source: RuleSource::Learned,
            ga: GaConfig::default(),
            keep_per_rep: false,
            truth_draw: 100_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub method: String,
    /// AIPW estimate of the learned rule's value (absent for q-learning).
    pub estimate: Option<f64>,
    pub se: Option<f64>,
    /// Noise-free target-population value of the learned rule.
    pub target_value: f64,
    pub pcd: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodAggregate {
    pub method: String,
    /// Pseudo-population optimal value for this method's weights.
    pub v_plus: Option<f64>,
    pub est_mean: Option<f64>,
    pub est_sd: Option<f64>,
    pub se_mean: Option<f64>,
    /// Coverage (%) of the pseudo-population optimum by the Wald interval.
    pub cp_plus: Option<f64>,
    /// Coverage (%) of the target-population optimum.
    pub cp_t: Option<f64>,
    pub target_value_mean: f64,
    pub target_value_sd: Option<f64>,
    pub pcd_mean: f64,
    pub reps_used: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub scenario: u8,
    pub design: super::scenario::Design,
    pub n: usize,
    pub n_target: usize,
    pub mode: Mode,
    pub seed: u64,
    pub reps: usize,
    /// Optimal target value V^t(beta^t).
    pub v_t_opt: f64,
    pub beta_t: Vec<f64>,
    pub methods: Vec<MethodAggregate>,
    pub included_replications: usize,
    pub excluded_replications: usize,
    /// One line per excluded replication.
    pub failures: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_rep: Option<Vec<RepRecord>>,
}

struct MethodOutcome {
    estimate: Option<f64>,
    se: Option<f64>,
    target_value: f64,
    pcd: f64,
}

/// Run the full study. Replications are embarrassingly parallel with
/// per-replication RNG streams and a fixed-order reduction, so the report
/// is a pure function of the configuration.
pub fn run_replications(config: &StudyConfig) -> Result<ReplicationReport> {
    let spec = &config.spec;
    if config.reps == 0 {
        return Err(Error::Parse("reps must be at least 1".into()));
    }
    let truth = target_truth(spec)?;
    let constraints = spec.mean_constraints();

    // Per-method truths for coverage.
    let mut v_plus = Vec::with_capacity(config.methods.len());
    for m in &config.methods {
        let v = match m {
            MethodKind::QLearn => None,
            MethodKind::Original => Some(source_truth(spec, config.truth_draw)?.v_plus),
            _ => Some(
                pseudo_truth(spec, m.gamma().unwrap(), &constraints, config.truth_draw)?.v_plus,
            ),
        };
        v_plus.push(v);
    }

    type RepResult = std::result::Result<Vec<MethodOutcome>, String>;
    let outcomes: Vec<RepResult> = (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            run_one_replication(config, &constraints, &truth.draw, &truth.beta_t, rep)
                .map_err(|e| format!("rep {rep}: {} ({e})", e.code()))
        })
        .collect();

    let mut failures = Vec::new();
    let mut kept: Vec<Vec<MethodOutcome>> = Vec::new();
    let mut per_rep = config.keep_per_rep.then(Vec::new);
    for (rep, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(methods) => {
                if let Some(pr) = per_rep.as_mut() {
                    for (m, o) in config.methods.iter().zip(&methods) {
                        pr.push(RepRecord {
                            rep,
                            method: m.name().to_string(),
                            estimate: o.estimate,
                            se: o.se,
                            target_value: o.target_value,
                            pcd: o.pcd,
                        });
                    }
                }
                kept.push(methods);
            }
            Err(msg) => failures.push(msg),
        }
    }

    let included = kept.len();
    let excluded = config.reps - included;
    let mut aggregates = Vec::with_capacity(config.methods.len());
    for (mi, m) in config.methods.iter().enumerate() {
        let outs: Vec<&MethodOutcome> = kept.iter().map(|r| &r[mi]).collect();
        aggregates.push(aggregate(m, &outs, v_plus[mi], truth.v_t_opt));
    }

    Ok(ReplicationReport {
        scenario: spec.scenario,
        design: spec.design,
        n: spec.n,
        n_target: spec.n_target,
        mode: config.mode,
        seed: spec.seed,
        reps: config.reps,
        v_t_opt: truth.v_t_opt,
        beta_t: truth.beta_t.beta().to_vec(),
        methods: aggregates,
        included_replications: included,
        excluded_replications: excluded,
        failures,
        per_rep,
    })
}

fn run_one_replication(
    config: &StudyConfig,
    constraints: &ConstraintSpec,
    target_draw: &super::scenario::TargetDraw,
    beta_t: &LinearRule,
    rep: usize,
) -> Result<Vec<MethodOutcome>> {
    let spec = &config.spec;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1000 + rep as u64);
    let sample = draw_source(spec, &mut rng);
    // Fixed draw order keeps streams aligned across modes and methods.
    let nuisance_seed: u64 = rng.random();
    let ga_seed_base: u64 = rng.random();

    let g = build_constraint_matrix(&sample, constraints)?;
    let feas = check_feasibility(&g);

    let fit = match config.mode {
        Mode::ParametricI => NuisanceFit::fit_parametric(&sample)?,
        Mode::NonparametricII => NuisanceFit::fit_nonparametric(&sample, nuisance_seed)?,
    };
    let preds = fit.predictions(&sample);

    let mut out = Vec::with_capacity(config.methods.len());
    for (mi, method) in config.methods.iter().enumerate() {
        if *method == MethodKind::QLearn {
            let rule = crate::policy::q_learning_rule(&sample)?;
            out.push(MethodOutcome {
                estimate: None,
                se: None,
                target_value: target_draw.value(&rule),
                pcd: pcd(&rule, beta_t, &target_draw.x)?,
            });
            continue;
        }

        let weights: Option<WeightSolution> = match method.gamma() {
            None => None,
            Some(gamma) => {
                if !feas.feasible && gamma <= 0.0 {
                    return Err(Error::Infeasible {
                        reason: format!("hull margin {:.3e}", feas.margin),
                    });
                }
                let mut cfg = CalibrationConfig::new(gamma)
                    .with_stabilization(method.stabilization());
                cfg.check_feasibility = false; // checked once above
                Some(calibrate(&g, &cfg)?)
            }
        };

        let rule = match &config.rule_source {
            RuleSource::Fixed(beta) => LinearRule::new(beta.to_vec())?,
            RuleSource::Learned => {
                let surface = ValueSurface::new(&sample, &preds, weights.as_ref())?;
                let ga = GaConfig {
                    seed: ga_seed_base.wrapping_add(mi as u64),
                    ..config.ga.clone()
                };
                ga_optimize(&surface, sample.p(), &ga).rule
            }
        };

        let calib = method.gamma().map(|gamma| (&g, gamma));
        let est = estimate_value_with(&sample, &rule, &fit, &preds, weights.as_ref(), calib)?;
        out.push(MethodOutcome {
            estimate: Some(est.value),
            se: Some(est.se),
            target_value: target_draw.value(&rule),
            pcd: pcd(&rule, beta_t, &target_draw.x)?,
        });
    }
    Ok(out)
}

fn aggregate(
    method: &MethodKind,
    outs: &[&MethodOutcome],
    v_plus: Option<f64>,
    v_t_opt: f64,
) -> MethodAggregate {
    let reps_used = outs.len();
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let sd = |xs: &[f64]| {
        if xs.len() < 2 {
            return None;
        }
        let m = mean(xs);
        Some((xs.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt())
    };

    let target_values: Vec<f64> = outs.iter().map(|o| o.target_value).collect();
    let pcds: Vec<f64> = outs.iter().map(|o| o.pcd).collect();

    let (est_mean, est_sd, se_mean, cp_plus, cp_t) = if *method == MethodKind::QLearn
        || reps_used == 0
    {
        (None, None, None, None, None)
    } else {
        let ests: Vec<f64> = outs.iter().filter_map(|o| o.estimate).collect();
        let ses: Vec<f64> = outs.iter().filter_map(|o| o.se).collect();
        let coverage = |truth: f64| {
            let hits = ests
                .iter()
                .zip(&ses)
                .filter(|(e, s)| (*e - truth).abs() <= 1.96 * **s)
                .count();
            100.0 * hits as f64 / reps_used as f64
        };
        (
            Some(mean(&ests)),
            sd(&ests),
            Some(mean(&ses)),
            v_plus.map(coverage),
            Some(coverage(v_t_opt)),
        )
    };

    MethodAggregate {
        method: method.name().to_string(),
        v_plus,
        est_mean,
        est_sd,
        se_mean,
        cp_plus,
        cp_t,
        target_value_mean: if target_values.is_empty() { f64::NAN } else { mean(&target_values) },
        target_value_sd: sd(&target_values),
        pcd_mean: if pcds.is_empty() { f64::NAN } else { mean(&pcds) },
        reps_used,
    }
}

/// Mean squared error of calibrated density-ratio weights W(X; lambda)
/// against the closed-form target/source ratio, over a fresh source draw.
pub fn density_ratio_mse(
    scenario: u8,
    constraints: &ConstraintSpec,
    gamma: f64,
    n: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(4);
    let x = draw_source_covariates(scenario, n, &mut rng);
    let g = build_constraint_matrix_x(&x, constraints)?;
    let mut cfg = CalibrationConfig::new(gamma);
    cfg.check_feasibility = false;
    let sol = calibrate(&g, &cfg)?;
    let mut mse = 0.0;
    let mut row = [0.0; 3];
    for i in 0..n {
        for (j, r) in row.iter_mut().enumerate() {
            *r = x[[i, j]];
        }
        let truth = true_density_ratio(scenario, &row)?;
        let d = sol.w_big[i] - truth;
        mse += d * d;
    }
    Ok(mse / n as f64)
}
