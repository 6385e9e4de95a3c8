//! Learn linear individualized treatment rules for a target population
//! from which only covariate summary statistics are available.
//!
//! The pipeline: calibration-weight a fully observed source sample so its
//! weighted covariate moments match the target summaries (Cressie-Read
//! family), estimate rule values with a calibrated AIPW estimator, search
//! the unit sphere of linear rules for the maximizer, and quantify
//! uncertainty with plug-in influence-function variances. A simulation
//! harness generates the covariate-shift scenarios used for validation.

pub mod calibration;
pub mod constraints;
pub mod data;
pub mod error;
pub mod nuisance;
pub mod policy;
pub mod simulate;
pub mod value;
pub mod linalg;

pub use calibration::{CalibrationConfig, Stabilization, WeightSolution};
pub use constraints::{build_constraint_matrix, ConstraintMatrix, ConstraintSpec, MomentDescriptor};
pub use data::{validate_dataset, LinearRule, SourceSample, TargetSample};
pub use error::{Error, ErrorClass, Result};
