//! Simulation harness: scenario generators, ground-truth computation,
//! and the replication study driver.

pub mod replicate;
pub mod scenario;
pub mod truth;

pub use replicate::{
    density_ratio_mse, run_replications, MethodAggregate, MethodKind, RepRecord,
    ReplicationReport, RuleSource, StudyConfig,
};
pub use scenario::{
    draw_source, draw_source_covariates, draw_target, gen_scenario, mu_outcome,
    true_density_ratio, true_propensity, Design, ScenarioSpec, SimulatedData, TargetDraw,
};
pub use truth::{pseudo_truth, source_truth, target_truth, PseudoTruth, TargetTruth};
