//! The Cressie-Read link `rho` and its derivative.
//!
//! gamma = -1 gives empirical likelihood, gamma = 0 entropy balancing,
//! gamma = 1 least squares. gamma = 0 is treated as the analytic limit
//! exp(x) rather than evaluating the general power form near zero.

use crate::error::{Error, Result};

/// Check that `x` lies in the domain of `rho(., gamma)`.
pub fn in_domain(x: f64, gamma: f64) -> bool {
    if gamma == 0.0 {
        // exp overflows past ~709; treat that as a domain exit so the
        // line search backs off instead of producing infinities.
        x < 700.0
    } else {
        1.0 + gamma * x > 0.0
    }
}

pub fn rho(x: f64, gamma: f64) -> Result<f64> {
    if !in_domain(x, gamma) {
        return Err(Error::DomainViolation { x, gamma });
    }
    Ok(rho_unchecked(x, gamma))
}

pub fn rho_prime(x: f64, gamma: f64) -> Result<f64> {
    if !in_domain(x, gamma) {
        return Err(Error::DomainViolation { x, gamma });
    }
    Ok(rho_prime_unchecked(x, gamma))
}

#[inline]
pub(crate) fn rho_unchecked(x: f64, gamma: f64) -> f64 {
    if gamma == 0.0 {
        x.exp()
    } else if gamma == -1.0 {
        1.0 / (1.0 - x)
    } else {
        (1.0 + gamma * x).powf(1.0 / gamma)
    }
}

#[inline]
pub(crate) fn rho_prime_unchecked(x: f64, gamma: f64) -> f64 {
    if gamma == 0.0 {
        x.exp()
    } else if gamma == -1.0 {
        let d = 1.0 - x;
        1.0 / (d * d)
    } else {
        (1.0 + gamma * x).powf(1.0 / gamma - 1.0)
    }
}

/// Antiderivative of `rho`, used as the convex merit function for the
/// damped Newton solve (its gradient is the estimating function).
#[inline]
pub(crate) fn rho_antideriv(x: f64, gamma: f64) -> f64 {
    if gamma == 0.0 {
        x.exp()
    } else if gamma == -1.0 {
        -(1.0 - x).ln()
    } else {
        (1.0 + gamma * x).powf((gamma + 1.0) / gamma) / (gamma + 1.0)
    }
}
