//! Crate-wide error type.
//!
//! Errors split into two classes that the CLI maps onto exit codes:
//! validation errors (bad input data or configuration) and numerical
//! failures (a solver or decomposition gave up on well-formed input).

use thiserror::Error;

/// Coarse classification used by callers that translate errors into
/// exit codes or machine-readable reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// The input data, spec, or configuration is invalid.
    Validation,
    /// A numerical procedure failed on valid input.
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    // ---- dataset validation ----
    #[error("treatment column contains a non-binary value {value} at row {row}")]
    NonBinaryTreatment { row: usize, value: f64 },
    #[error("non-finite value in column `{column}` at row {row}")]
    NonFinite { column: String, row: usize },
    #[error("only treatment arm {arm} is present; both arms are required")]
    SingleArm { arm: u8 },
    #[error("dataset has {n} rows; at least {min} are required")]
    TooFewRows { n: usize, min: usize },
    #[error("malformed input: {0}")]
    Parse(String),

    // ---- constraint construction ----
    #[error("moment descriptor refers to covariate {index}, but the sample has {p} covariates")]
    IndexOutOfRange { index: usize, p: usize },
    #[error("unsupported constraint kind `{0}`")]
    UnsupportedConstraint(String),
    #[error("constraint spec has {targets} targets for {moments} moments")]
    TargetLengthMismatch { moments: usize, targets: usize },

    // ---- calibration ----
    #[error("argument {x} leaves the domain of rho for gamma = {gamma}")]
    DomainViolation { x: f64, gamma: f64 },
    #[error("calibration targets are infeasible: {reason}")]
    Infeasible { reason: String },
    #[error("dual solver did not converge: residual {residual:.3e} > tol {tol:.3e} after {iters} iterations")]
    NotConverged { residual: f64, tol: f64, iters: usize },
    #[error("weight stabilization requires strictly positive weights; w[{index}] = {value}")]
    NonPositiveWeight { index: usize, value: f64 },

    // ---- nuisance fitting ----
    #[error("design matrix is rank deficient (pivot {pivot:.3e} at column {column})")]
    RankDeficient { column: usize, pivot: f64 },
    #[error("treatment arm {arm} has {n} observations; at least {min} are required")]
    TooFewObservations { arm: u8, n: usize, min: usize },
    #[error("covariate {index} is degenerate (zero variance)")]
    DegenerateCovariate { index: usize },

    // ---- value / variance ----
    #[error("length mismatch: expected {expected}, got {got} ({what})")]
    LengthMismatch { what: String, expected: usize, got: usize },
    #[error("matrix {name} is numerically singular (condition number {cond:.3e})")]
    SingularG { name: String, cond: f64 },

    // ---- policy ----
    #[error("grid search supports p <= {max}, got p = {p}")]
    DimensionTooLarge { p: usize, max: usize },
    #[error("dimension mismatch: rule has {rule_dim} coefficients, covariates have {x_dim} columns")]
    DimensionMismatch { rule_dim: usize, x_dim: usize },

    // ---- simulation ----
    #[error("scenario {0} has no closed-form density ratio")]
    UnsupportedScenario(u8),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Classification for exit-code mapping.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::NonBinaryTreatment { .. }
            | Error::NonFinite { .. }
            | Error::SingleArm { .. }
            | Error::TooFewRows { .. }
            | Error::Parse(_)
            | Error::IndexOutOfRange { .. }
            | Error::UnsupportedConstraint(_)
            | Error::TargetLengthMismatch { .. }
            | Error::LengthMismatch { .. }
            | Error::DimensionTooLarge { .. }
            | Error::DimensionMismatch { .. }
            | Error::UnsupportedScenario(_)
            | Error::TooFewObservations { .. }
            | Error::Io(_) => ErrorClass::Validation,
            Error::DomainViolation { .. }
            | Error::Infeasible { .. }
            | Error::NotConverged { .. }
            | Error::NonPositiveWeight { .. }
            | Error::RankDeficient { .. }
            | Error::DegenerateCovariate { .. }
            | Error::SingularG { .. } => ErrorClass::Numeric,
        }
    }

    /// Stable machine-readable code, e.g. `calibration.infeasible`.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NonBinaryTreatment { .. } => "data.non_binary_treatment",
            Error::NonFinite { .. } => "data.non_finite",
            Error::SingleArm { .. } => "data.single_arm",
            Error::TooFewRows { .. } => "data.too_few_rows",
            Error::Parse(_) => "data.parse",
            Error::IndexOutOfRange { .. } => "constraints.index_out_of_range",
            Error::UnsupportedConstraint(_) => "constraints.unsupported",
            Error::TargetLengthMismatch { .. } => "constraints.target_length",
            Error::DomainViolation { .. } => "calibration.domain_violation",
            Error::Infeasible { .. } => "calibration.infeasible",
            Error::NotConverged { .. } => "calibration.not_converged",
            Error::NonPositiveWeight { .. } => "calibration.non_positive_weight",
            Error::RankDeficient { .. } => "nuisance.rank_deficient",
            Error::TooFewObservations { .. } => "nuisance.too_few_observations",
            Error::DegenerateCovariate { .. } => "nuisance.degenerate_covariate",
            Error::LengthMismatch { .. } => "value.length_mismatch",
            Error::SingularG { .. } => "value.singular_g",
            Error::DimensionTooLarge { .. } => "policy.dimension_too_large",
            Error::DimensionMismatch { .. } => "policy.dimension_mismatch",
            Error::UnsupportedScenario(_) => "simulate.unsupported_scenario",
            Error::Io(_) => "input.io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
