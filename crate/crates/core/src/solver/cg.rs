//! Matrix-free conjugate gradient for symmetric positive definite operators.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    /// `‖rhs - A x‖₂ / ‖rhs‖₂`, recomputed from the returned iterate.
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn true_residual(apply: &impl Fn(&[f64], &mut [f64]), rhs: &[f64], x: &[f64], r: &mut [f64]) {
    apply(x, r);
    for (ri, bi) in r.iter_mut().zip(rhs) {
        *ri = bi - *ri;
    }
}

/// Solves `A x = rhs` starting from the contents of `x`.
///
/// Convergence is declared on the true residual, so the reported
/// `relative_residual` always satisfies the tolerance on success. When the
/// recursively updated residual drifts from the true one the iteration
/// restarts from the current iterate.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    rhs: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<CgReport> {
    let n = rhs.len();
    assert_eq!(x.len(), n);
    let rhs_norm = dot(rhs, rhs).sqrt();
    if rhs_norm == 0.0 {
        x.iter_mut().for_each(|xi| *xi = 0.0);
        return Ok(CgReport {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let target = rel_tol * rhs_norm;

    let mut r = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut iterations = 0;

    loop {
        true_residual(&apply, rhs, x, &mut r);
        let mut rr = dot(&r, &r);
        if rr.sqrt() <= target {
            return Ok(CgReport {
                iterations,
                relative_residual: rr.sqrt() / rhs_norm,
            });
        }
        if iterations >= max_iter {
            return Err(Error::CgNotConverged {
                iterations,
                residual: rr.sqrt() / rhs_norm,
            });
        }
        p.copy_from_slice(&r);
        while iterations < max_iter {
            apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(Error::CgNotConverged {
                    iterations,
                    residual: rr.sqrt() / rhs_norm,
                });
            }
            let step = rr / pap;
            for i in 0..n {
                x[i] += step * p[i];
                r[i] -= step * ap[i];
            }
            iterations += 1;
            let rr_next = dot(&r, &r);
            if rr_next.sqrt() <= target {
                break;
            }
            let ratio = rr_next / rr;
            for i in 0..n {
                p[i] = r[i] + ratio * p[i];
            }
            rr = rr_next;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiagonal(x: &[f64], y: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            let left = if i > 0 { x[i - 1] } else { 0.0 };
            let right = if i + 1 < n { x[i + 1] } else { 0.0 };
            y[i] = 4.0 * x[i] - left - right;
        }
    }

    #[test]
    fn solves_spd_tridiagonal() {
        let rhs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut x = vec![0.0; 50];
        let rep = conjugate_gradient(tridiagonal, &rhs, &mut x, 1e-12, 500).unwrap();
        assert!(rep.relative_residual <= 1e-12);
        let mut ax = vec![0.0; 50];
        tridiagonal(&x, &mut ax);
        let err: f64 = ax
            .iter()
            .zip(&rhs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let mut x = vec![1.0; 4];
        let rep = conjugate_gradient(tridiagonal, &[0.0; 4], &mut x, 1e-12, 10).unwrap();
        assert_eq!(rep.iterations, 0);
        assert_eq!(x, vec![0.0; 4]);
    }

    #[test]
    fn reports_non_convergence() {
        let rhs: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let mut x = vec![0.0; 100];
        let err = conjugate_gradient(tridiagonal, &rhs, &mut x, 1e-14, 2).unwrap_err();
        assert!(matches!(err, Error::CgNotConverged { iterations: 2, .. }));
    }
}
