//! Matrix-free Jacobi-preconditioned conjugate gradients.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub iterations: usize,
    /// Preconditioned residual norm relative to the right-hand side, per iteration.
    pub residual_history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solve `A x = b` for symmetric positive definite `A` given as an operator.
///
/// `diag` is the diagonal of `A`. Convergence is measured as
/// `sqrt(r' D^-1 r) / sqrt(b' D^-1 b) <= tol`. `x` holds the initial guess
/// on entry and the solution on exit.
pub fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let n = b.len();
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for k in 0..n {
        r[k] = b[k] - r[k];
    }
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(r, d)| r / d).collect();
    let bnorm = b.iter().zip(diag).map(|(b, d)| b * b / d).sum::<f64>().sqrt();
    let scale = if bnorm > 0.0 { bnorm } else { 1.0 };
    let mut rz = dot(&r, &z);
    let mut history = vec![rz.max(0.0).sqrt() / scale];
    if history[0] <= tol {
        return Ok(CgOutcome { iterations: 0, residual_history: history });
    }
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let a = rz / pap;
        for k in 0..n {
            x[k] += a * p[k];
            r[k] -= a * ap[k];
            z[k] = r[k] / diag[k];
        }
        let rz_new = dot(&r, &z);
        history.push(rz_new.max(0.0).sqrt() / scale);
        if history[it] <= tol {
            return Ok(CgOutcome { iterations: it, residual_history: history });
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::LinearSolve {
        iterations: history.len() - 1,
        last_residual: *history.last().unwrap_or(&f64::NAN),
        residual_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_system() {
        let n = 50;
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = 2.0 * x[i] - l - r;
            }
        };
        let exact: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; n];
        apply(&exact, &mut b);
        let mut x = vec![0.0; n];
        let out = pcg(apply, &vec![2.0; n], &b, &mut x, 1e-13, 1000).unwrap();
        assert!(out.iterations <= n + 1);
        for (a, e) in x.iter().zip(&exact) {
            assert!((a - e).abs() < 1e-10);
        }
    }

    #[test]
    fn iteration_cap_reports_history() {
        let n = 100;
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = 2.0 * x[i] - l - r;
            }
        };
        let mut x = vec![0.0; n];
        let err = pcg(apply, &vec![2.0; n], &vec![1.0; n], &mut x, 1e-14, 3).unwrap_err();
        match err {
            Error::LinearSolve { iterations, residual_history, .. } => {
                assert_eq!(iterations, 3);
                assert_eq!(residual_history.len(), 4);
            }
            e => panic!("{e}"),
        }
    }
}
