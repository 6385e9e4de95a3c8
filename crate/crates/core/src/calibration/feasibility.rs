//! Convex-hull feasibility of the balancing constraints.
//!
//! The calibration problem has a solution with positive weights exactly
//! when the origin lies inside the convex hull of the centered constraint
//! rows. We decide this with a linear program that maximizes the smallest
//! admissible weight:
//!
//!   max delta  s.t.  sum_i w_i G_i = 0,  sum_i w_i = 1,  w_i >= delta.
//!
//! delta* > 0 means the origin is interior (margin = delta*), delta* = 0
//! puts it on the hull boundary, and delta* < 0 (or an infeasible LP)
//! means it is outside; in the latter cases the LP duals provide a
//! separating direction v with v'G_i < 0 for all i.

use crate::constraints::ConstraintMatrix;

#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    /// Origin strictly inside the hull (margin > tolerance).
    pub feasible: bool,
    /// Largest uniform lower bound on weights solving the constraints.
    pub margin: f64,
    /// Margin within tolerance of zero: the target sits on the hull
    /// boundary, which interior-requiring solvers cannot handle.
    pub boundary: bool,
    /// Direction v (max-norm 1) with v'G_i < 0 for all rows, when the
    /// origin is outside the hull.
    pub separating_direction: Option<Vec<f64>>,
}

const EPS: f64 = 1e-9;

/// Decide hull membership for the rows of `g`.
pub fn check_feasibility(g: &ConstraintMatrix) -> FeasibilityReport {
    let n = g.n();
    let q = g.q();

    // Column sums of G (coefficients of delta in the balance rows).
    let mut colsum = vec![0.0; q];
    for i in 0..n {
        for k in 0..q {
            colsum[k] += g.g[[i, k]];
        }
    }

    // Structural variables: u_1..u_n (w_i = u_i + delta), dp, dm with
    // delta = dp - dm. Rows: q balance rows (rhs 0) plus the sum row
    // (rhs 1).
    let rows = q + 1;
    let cols = n + 2;
    let mut lp = Simplex::new(rows, cols);
    for k in 0..q {
        for i in 0..n {
            lp.set(k, i, g.g[[i, k]]);
        }
        lp.set(k, n, colsum[k]);
        lp.set(k, n + 1, -colsum[k]);
        lp.set_rhs(k, 0.0);
    }
    for i in 0..n {
        lp.set(q, i, 1.0);
    }
    lp.set(q, n, n as f64);
    lp.set(q, n + 1, -(n as f64));
    lp.set_rhs(q, 1.0);

    match lp.solve(&{
        let mut c = vec![0.0; cols];
        c[n] = -1.0; // maximize dp - dm  <=>  minimize dm - dp
        c[n + 1] = 1.0;
        c
    }) {
        LpOutcome::Optimal { objective, duals } => {
            let margin = -objective;
            if margin > EPS {
                FeasibilityReport {
                    feasible: true,
                    margin,
                    boundary: false,
                    separating_direction: None,
                }
            } else if margin >= -EPS {
                FeasibilityReport {
                    feasible: false,
                    margin: margin.max(0.0),
                    boundary: true,
                    separating_direction: None,
                }
            } else {
                FeasibilityReport {
                    feasible: false,
                    margin,
                    boundary: false,
                    separating_direction: direction_from_duals(&duals[..q]),
                }
            }
        }
        LpOutcome::Infeasible { farkas } => FeasibilityReport {
            feasible: false,
            margin: f64::NEG_INFINITY,
            boundary: false,
            separating_direction: direction_from_duals(&farkas[..q]),
        },
    }
}

/// The balance-row duals are already a separating certificate
/// (v'G_i <= -y_sum < 0 by dual feasibility); normalize to max-norm 1.
fn direction_from_duals(y: &[f64]) -> Option<Vec<f64>> {
    let scale = y.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if scale <= 0.0 {
        return None;
    }
    Some(y.iter().map(|v| v / scale).collect())
}

enum LpOutcome {
    Optimal { objective: f64, duals: Vec<f64> },
    Infeasible { farkas: Vec<f64> },
}

/// Dense two-phase primal simplex for `min c'z, A z = b, z >= 0`.
/// Rows are few (q + 1); columns may be many. Dantzig pricing with a
/// Bland fallback for anti-cycling.
struct Simplex {
    rows: usize,
    ncols: usize, // structural columns
    a: Vec<f64>,  // (rows) x (ncols + rows artificial + 1 rhs)
    width: usize,
    obj: Vec<f64>, // reduced-cost row, same width
    basis: Vec<usize>,
}

impl Simplex {
    fn new(rows: usize, ncols: usize) -> Self {
        let width = ncols + rows + 1;
        Simplex {
            rows,
            ncols,
            a: vec![0.0; rows * width],
            width,
            obj: vec![0.0; width],
            basis: vec![0; rows],
        }
    }

    fn set(&mut self, r: usize, c: usize, v: f64) {
        self.a[r * self.width + c] = v;
    }

    fn set_rhs(&mut self, r: usize, v: f64) {
        let w = self.width;
        self.a[r * w + w - 1] = v;
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.a[r * self.width + c]
    }

    fn solve(&mut self, cost: &[f64]) -> LpOutcome {
        let rows = self.rows;
        let ncols = self.ncols;
        let w = self.width;

        // Flip rows to make rhs nonnegative, then install the artificial
        // identity basis.
        for r in 0..rows {
            if self.at(r, w - 1) < 0.0 {
                for c in 0..w {
                    self.a[r * w + c] = -self.a[r * w + c];
                }
            }
            self.set(r, ncols + r, 1.0);
            self.basis[r] = ncols + r;
        }

        // Phase 1: minimize the artificial sum. Reduced costs start as
        // -(sum of constraint rows) over structural columns.
        for c in 0..w {
            let mut s = 0.0;
            for r in 0..rows {
                s += self.at(r, c);
            }
            self.obj[c] = if (ncols..ncols + rows).contains(&c) { 1.0 - s } else { -s };
        }
        if !self.iterate(ncols + rows) {
            // Exhausted the iteration budget; report as infeasible with
            // whatever certificate the duals give.
            debug_assert!(false, "simplex phase 1 exceeded its iteration budget");
            return LpOutcome::Infeasible { farkas: self.duals_phase1() };
        }
        let phase1 = -self.obj[w - 1];
        if phase1 > EPS {
            return LpOutcome::Infeasible { farkas: self.duals_phase1() };
        }

        // Phase 2: reprice with the real costs; artificial columns are
        // barred from entering.
        for c in 0..w - 1 {
            let real = if c < ncols { cost[c] } else { 0.0 };
            let mut s = real;
            for r in 0..rows {
                let b = self.basis[r];
                let cb = if b < ncols { cost[b] } else { 0.0 };
                s -= cb * self.at(r, c);
            }
            self.obj[c] = s;
        }
        let mut z = 0.0;
        for r in 0..rows {
            let b = self.basis[r];
            let cb = if b < ncols { cost[b] } else { 0.0 };
            z += cb * self.at(r, w - 1);
        }
        self.obj[w - 1] = -z;
        let ok = self.iterate(ncols);
        debug_assert!(ok, "simplex phase 2 exceeded its iteration budget");

        // Duals of the balance rows: y_k = -reduced cost of artificial k.
        let duals = (0..rows).map(|r| -self.obj[ncols + r]).collect();
        LpOutcome::Optimal { objective: -self.obj[w - 1], duals }
    }

    fn duals_phase1(&self) -> Vec<f64> {
        (0..self.rows).map(|r| 1.0 - self.obj[self.ncols + r]).collect()
    }

    /// Run simplex pivots until optimal. `enter_limit` bounds which
    /// columns may enter (used to bar artificials in phase 2).
    fn iterate(&mut self, enter_limit: usize) -> bool {
        let w = self.width;
        let max_iter = 50_000usize;
        for iter in 0..max_iter {
            let bland = iter > 5 * (self.ncols + self.rows);
            // entering column
            let mut enter = None;
            let mut best = -EPS;
            for c in 0..enter_limit {
                let rc = self.obj[c];
                if rc < -EPS {
                    if bland {
                        enter = Some(c);
                        break;
                    }
                    if rc < best {
                        best = rc;
                        enter = Some(c);
                    }
                }
            }
            let Some(ec) = enter else {
                return true; // optimal
            };
            // ratio test; ties broken by smallest basis index
            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for r in 0..self.rows {
                let arc = self.at(r, ec);
                if arc > EPS {
                    let ratio = self.at(r, w - 1) / arc;
                    let better = ratio < best_ratio - 1e-12
                        || (ratio < best_ratio + 1e-12
                            && leave.is_some_and(|lr| self.basis[r] < self.basis[lr]));
                    if better {
                        best_ratio = ratio;
                        leave = Some(r);
                    }
                }
            }
            let Some(lr) = leave else {
                // Unbounded below; cannot happen for these LPs but bail
                // out as optimal-at-current rather than spinning.
                debug_assert!(false, "simplex detected an unbounded direction");
                return true;
            };
            self.pivot(lr, ec);
        }
        false
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let piv = self.at(r, c);
        for j in 0..w {
            self.a[r * w + j] /= piv;
        }
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.at(i, c);
            if f != 0.0 {
                for j in 0..w {
                    self.a[i * w + j] -= f * self.a[r * w + j];
                }
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for j in 0..w {
                self.obj[j] -= f * self.a[r * w + j];
            }
        }
        self.basis[r] = c;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn cm(g: ndarray::Array2<f64>) -> ConstraintMatrix {
        ConstraintMatrix { g }
    }

    #[test]
    fn centered_data_is_feasible() {
        // Column means zero: origin is the centroid.
        let g = cm(array![[1.0, -1.0], [-1.0, 1.0], [0.5, 0.5], [-0.5, -0.5]]);
        let rep = check_feasibility(&g);
        assert!(rep.feasible);
        assert!(rep.margin > 0.0);
    }

    #[test]
    fn one_sided_scalar_data_is_infeasible() {
        let g = cm(array![[0.5], [1.0], [2.0]]);
        let rep = check_feasibility(&g);
        assert!(!rep.feasible);
        let v = rep.separating_direction.expect("needs a separating direction");
        assert!((v[0] + 1.0).abs() < 1e-9, "direction {v:?}");
        // certificate: v' G_i < 0 for every row
        for i in 0..3 {
            assert!(v[0] * g.g[[i, 0]] < 0.0);
        }
    }

    #[test]
    fn target_at_maximum_is_boundary() {
        // g values 1, 2, 3 with target 3: centered rows -2, -1, 0.
        let g = cm(array![[-2.0], [-1.0], [0.0]]);
        let rep = check_feasibility(&g);
        assert!(!rep.feasible);
        assert!(rep.boundary);
        assert!(rep.margin.abs() <= 1e-9);
    }

    #[test]
    fn interior_margin_matches_hand_lp() {
        // Scalar rows -1, 3: weights (w, 1-w) need -w + 3(1-w) = 0 so
        // w = 3/4; min weight is 1/4.
        let g = cm(array![[-1.0], [3.0]]);
        let rep = check_feasibility(&g);
        assert!(rep.feasible);
        assert!((rep.margin - 0.25).abs() < 1e-8, "margin {}", rep.margin);
    }
}
