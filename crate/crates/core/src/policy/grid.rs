//! Exhaustive grid search over low-dimensional unit spheres, plus a local
//! angular refinement pass. Used for ground-truth rule computation.

use rayon::prelude::*;

use crate::data::LinearRule;
use crate::error::{Error, Result};

use super::RuleObjective;

/// Maximum covariate dimension with a tractable exhaustive grid.
pub const MAX_GRID_P: usize = 3;

/// Exhaustive search at a given angular resolution (degrees).
///
/// p = 1 walks the circle, p = 2 uses a Fibonacci lattice on S2, p = 3 a
/// product grid of hyperspherical angles. The angle grids are generated
/// by stepping, so halving the resolution yields a superset of
/// candidates. Ties break toward the lexicographically smaller vector.
/// Candidates are evaluated in parallel; the reduction order is fixed, so
/// the result does not depend on the worker count.
pub fn grid_search_sphere<O: RuleObjective + Sync>(
    objective: &O,
    p: usize,
    resolution_deg: f64,
) -> Result<(LinearRule, f64)> {
    if p == 0 || p > MAX_GRID_P {
        return Err(Error::DimensionTooLarge { p, max: MAX_GRID_P });
    }
    let res = resolution_deg.to_radians();
    let candidates: Vec<Vec<f64>> = match p {
        1 => {
            let steps = (std::f64::consts::TAU / res).ceil() as usize;
            (0..steps)
                .map(|k| {
                    let t = k as f64 * res;
                    vec![t.cos(), t.sin()]
                })
                .collect()
        }
        2 => {
            // Fibonacci lattice with mean spacing ~ resolution.
            let n = ((4.0 * std::f64::consts::PI) / (res * res)).ceil() as usize;
            let golden = (1.0 + 5.0_f64.sqrt()) / 2.0;
            (0..n)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let phi = std::f64::consts::TAU * (k as f64 / golden).fract();
                    vec![z, r * phi.cos(), r * phi.sin()]
                })
                .collect()
        }
        3 => {
            let s1 = (std::f64::consts::PI / res).floor() as usize;
            let s3 = (std::f64::consts::TAU / res).ceil() as usize;
            let mut c = Vec::with_capacity((s1 + 1) * (s1 + 1) * s3);
            for k1 in 0..=s1 {
                let (s_1, c_1) = (k1 as f64 * res).sin_cos();
                for k2 in 0..=s1 {
                    let (s_2, c_2) = (k2 as f64 * res).sin_cos();
                    for k3 in 0..s3 {
                        let (s_3, c_3) = (k3 as f64 * res).sin_cos();
                        c.push(vec![c_1, s_1 * c_2, s_1 * s_2 * c_3, s_1 * s_2 * s_3]);
                    }
                }
            }
            c
        }
        _ => unreachable!(),
    };

    let chunk = 4096;
    let chunk_bests: Vec<(f64, Vec<f64>)> = candidates
        .par_chunks(chunk)
        .map(|cands| {
            let mut best: Option<(f64, Vec<f64>)> = None;
            for beta in cands {
                let rule = LinearRule::new(beta.clone()).expect("grid points are unit vectors");
                let v = objective.value(&rule);
                let better = match &best {
                    None => true,
                    Some((bv, bb)) => v > *bv || (v == *bv && super::lex_smaller(rule.beta(), bb)),
                };
                if better {
                    best = Some((v, rule.beta().to_vec()));
                }
            }
            best.expect("chunks are non-empty")
        })
        .collect();

    let mut best: Option<(f64, Vec<f64>)> = None;
    for (v, beta) in chunk_bests {
        let better = match &best {
            None => true,
            Some((bv, bb)) => v > *bv || (v == *bv && super::lex_smaller(&beta, bb)),
        };
        if better {
            best = Some((v, beta));
        }
    }
    let (value, beta) = best.expect("grid is non-empty");
    Ok((LinearRule::new(beta).expect("unit vector"), value))
}

/// Local refinement: repeatedly search a small tangent-space grid around
/// the incumbent, shrinking the angular radius each round.
pub fn refine_sphere<O: RuleObjective>(
    objective: &O,
    start: &LinearRule,
    mut radius_rad: f64,
    per_axis: usize,
    rounds: usize,
) -> (LinearRule, f64) {
    let dim = start.beta().len();
    let mut center = start.beta().to_vec();
    let mut best_val = objective.value(start);

    for _ in 0..rounds {
        let frame = tangent_frame(&center);
        let mut improved = true;
        while improved {
            improved = false;
            // coordinate sweeps over tangent directions
            for t in &frame {
                for s in 1..=per_axis {
                    let ang = radius_rad * s as f64 / per_axis as f64;
                    for sign in [-1.0, 1.0] {
                        let cand = rotate(&center, t, sign * ang);
                        let rule = LinearRule::new(cand.clone()).expect("unit");
                        let v = objective.value(&rule);
                        if v > best_val {
                            best_val = v;
                            center = rule.beta().to_vec();
                            improved = true;
                        }
                    }
                }
            }
            debug_assert_eq!(frame.len(), dim - 1);
        }
        radius_rad /= 4.0;
    }
    (LinearRule::new(center).expect("unit"), best_val)
}

/// Geodesic step: rotate `u` by `angle` toward tangent direction `t`.
fn rotate(u: &[f64], t: &[f64], angle: f64) -> Vec<f64> {
    let (s, c) = angle.sin_cos();
    u.iter().zip(t).map(|(a, b)| c * a + s * b).collect()
}

/// Orthonormal basis of the tangent space at `u` (Gram-Schmidt against
/// the standard basis).
fn tangent_frame(u: &[f64]) -> Vec<Vec<f64>> {
    let dim = u.len();
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(dim - 1);
    for e in 0..dim {
        let mut v = vec![0.0; dim];
        v[e] = 1.0;
        // remove the component along u and along the frame so far
        let du: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
        for (x, y) in v.iter_mut().zip(u) {
            *x -= du * y;
        }
        for f in &frame {
            let d: f64 = v.iter().zip(f).map(|(a, b)| a * b).sum();
            for (x, y) in v.iter_mut().zip(f) {
                *x -= d * y;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            frame.push(v.into_iter().map(|x| x / norm).collect());
            if frame.len() == dim - 1 {
                break;
            }
        }
    }
    frame
}
