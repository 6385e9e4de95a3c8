//! Small dense linear algebra helpers.
//!
//! Everything here operates on matrices of modest dimension (constraint
//! counts, nuisance parameter blocks), so plain Gaussian elimination with
//! partial pivoting is the right tool. No BLAS dependency.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Condition-number ceiling beyond which a matrix is treated as singular.
pub const COND_LIMIT: f64 = 1e12;

/// Solve `a x = b` by Gaussian elimination with partial pivoting.
///
/// `a` is consumed as a working copy. Fails with `SingularG` when a pivot
/// underflows (the caller supplies the matrix name for the report).
pub fn solve(a: &Array2<f64>, b: &Array1<f64>, name: &str) -> Result<Array1<f64>> {
    let x = solve_multi(a, &to_col(b), name)?;
    Ok(x.column(0).to_owned())
}

/// Solve `a X = B` for multiple right-hand sides.
pub fn solve_multi(a: &Array2<f64>, b: &Array2<f64>, name: &str) -> Result<Array2<f64>> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n, "solve_multi needs a square matrix");
    assert_eq!(b.nrows(), n, "rhs row count must match");
    let m = b.ncols();

    let mut lu = a.clone();
    let mut rhs = b.clone();
    let scale: f64 = a.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())).max(1.0);

    for k in 0..n {
        // partial pivot
        let mut p = k;
        let mut best = lu[[k, k]].abs();
        for i in (k + 1)..n {
            let v = lu[[i, k]].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best <= scale * 1e-14 {
            return Err(Error::SingularG { name: name.to_string(), cond: f64::INFINITY });
        }
        if p != k {
            for j in 0..n {
                lu.swap([k, j], [p, j]);
            }
            for j in 0..m {
                rhs.swap([k, j], [p, j]);
            }
        }
        for i in (k + 1)..n {
            let f = lu[[i, k]] / lu[[k, k]];
            if f == 0.0 {
                continue;
            }
            for j in (k + 1)..n {
                lu[[i, j]] -= f * lu[[k, j]];
            }
            for j in 0..m {
                rhs[[i, j]] -= f * rhs[[k, j]];
            }
        }
    }
    // back substitution
    let mut x = Array2::zeros((n, m));
    for j in 0..m {
        for i in (0..n).rev() {
            let mut s = rhs[[i, j]];
            for k in (i + 1)..n {
                s -= lu[[i, k]] * x[[k, j]];
            }
            x[[i, j]] = s / lu[[i, i]];
        }
    }
    Ok(x)
}

/// Inverse with a 1-norm condition estimate. Errors when the condition
/// number exceeds [`COND_LIMIT`].
pub fn inverse_checked(a: &Array2<f64>, name: &str) -> Result<Array2<f64>> {
    let n = a.nrows();
    let inv = solve_multi(a, &Array2::eye(n), name)?;
    let cond = norm1(a) * norm1(&inv);
    if !cond.is_finite() || cond > COND_LIMIT {
        return Err(Error::SingularG { name: name.to_string(), cond });
    }
    Ok(inv)
}

/// Solve after symmetrizing `a` in place: `(a + a^T) / 2`. Used for the
/// plug-in information matrices, which are symmetric up to roundoff.
/// The solve residual is verified against `1e-8 * ||b||`.
pub fn solve_symmetrized(a: &Array2<f64>, b: &Array1<f64>, name: &str) -> Result<Array1<f64>> {
    let sym = symmetrize(a);
    let inv = inverse_checked(&sym, name)?;
    let x = inv.dot(b);
    let resid = (&sym.dot(&x) - b).iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let bnorm = b.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if resid > 1e-8 * bnorm.max(1.0) {
        return Err(Error::SingularG { name: name.to_string(), cond: norm1(&sym) * norm1(&inv) });
    }
    Ok(x)
}

pub fn symmetrize(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut s = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            s[[i, j]] = 0.5 * (a[[i, j]] + a[[j, i]]);
        }
    }
    s
}

fn norm1(a: &Array2<f64>) -> f64 {
    let mut best = 0.0_f64;
    for j in 0..a.ncols() {
        let s: f64 = a.column(j).iter().map(|v| v.abs()).sum();
        best = best.max(s);
    }
    best
}

fn to_col(b: &Array1<f64>) -> Array2<f64> {
    let n = b.len();
    let mut m = Array2::zeros((n, 1));
    for i in 0..n {
        m[[i, 0]] = b[i];
    }
    m
}

/// Max-norm of a vector.
pub fn max_abs(v: &Array1<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solves_small_system() {
        let a = array![[4.0, 1.0], [1.0, 3.0]];
        let b = array![1.0, 2.0];
        let x = solve(&a, &b, "a").unwrap();
        let r = a.dot(&x) - &b;
        assert!(max_abs(&r) < 1e-12);
    }

    #[test]
    fn rejects_singular() {
        let a = array![[1.0, 2.0], [2.0, 4.0]];
        let b = array![1.0, 2.0];
        assert!(matches!(solve(&a, &b, "g"), Err(Error::SingularG { .. })));
    }

    #[test]
    fn condition_limit_enforced() {
        let a = array![[1.0, 0.0], [0.0, 1e-14]];
        assert!(inverse_checked(&a, "ill").is_err());
    }
}
