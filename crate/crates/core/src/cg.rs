//! Conjugate gradient for symmetric positive-definite operators.

use crate::error::{Error, Result};
use crate::Signal;

/// Outcome of a successful CG solve.
#[derive(Debug, Clone, PartialEq)]
pub struct CgSolution {
    pub x: Signal,
    pub iterations: usize,
    /// `‖b − A x‖₂ / ‖b‖₂` at exit (recursively updated residual).
    pub relative_residual: f64,
}

/// Solves `A x = b` starting from zero, stopping once the relative residual
/// drops to `tol`. A zero right-hand side returns zero without iterating.
pub fn conjugate_gradient<F>(apply: F, b: &Signal, tol: f64, max_iters: usize) -> Result<CgSolution>
where
    F: Fn(&Signal) -> Signal,
{
    let b_norm = b.norm();
    let mut x = Signal::zeros(b.len());
    if b_norm == 0.0 {
        return Ok(CgSolution {
            x,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rs_old = r.norm_squared();

    for it in 0..max_iters {
        let ap = apply(&p);
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            return Err(Error::Numerical(alloc::format!(
                "CG breakdown at iteration {it}: pᵀAp = {pap:e}"
            )));
        }
        let step = rs_old / pap;
        x.axpy(step, &p, 1.0);
        r.axpy(-step, &ap, 1.0);
        let rs_new = r.norm_squared();
        let rel = libm::sqrt(rs_new) / b_norm;
        if rel <= tol {
            return Ok(CgSolution {
                x,
                iterations: it + 1,
                relative_residual: rel,
            });
        }
        p = &r + &p * (rs_new / rs_old);
        rs_old = rs_new;
    }
    Err(Error::Convergence {
        iterations: max_iters,
        residual: libm::sqrt(rs_old) / b_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn diagonal_system() {
        let d = Signal::from_vec(vec![2.0, 3.0, 4.0]);
        let b = Signal::from_vec(vec![2.0, 6.0, 12.0]);
        let sol = conjugate_gradient(|v| v.component_mul(&d), &b, 1e-12, 10).unwrap();
        assert!((sol.x - Signal::from_vec(vec![1.0, 2.0, 3.0])).amax() < 1e-10);
        assert!(sol.iterations <= 3);
    }

    #[test]
    fn zero_rhs() {
        let sol = conjugate_gradient(|v| v.clone(), &Signal::zeros(4), 1e-12, 10).unwrap();
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.x, Signal::zeros(4));
    }

    #[test]
    fn reports_non_convergence() {
        let d = Signal::from_vec(vec![1.0, 10.0, 100.0, 1000.0]);
        let b = Signal::from_element(4, 1.0);
        let err = conjugate_gradient(|v| v.component_mul(&d), &b, 1e-14, 1).unwrap_err();
        assert!(matches!(err, Error::Convergence { iterations: 1, .. }));
    }
}
