//! Laplacian eigendecomposition and the graph Fourier transform.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_len, Error, Result};
use crate::graph::Laplacian;
use crate::Signal;

/// Default residual tolerance for orthonormality and reconstruction checks.
pub const DECOMPOSITION_TOL: f64 = 1e-8;

const MAX_SWEEPS: usize = 10_000;

/// Orthonormal eigenbasis `U` and ascending eigenvalues of a Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomp {
    basis: DMatrix<f64>,
    eigenvalues: DVector<f64>,
}

impl SpectralDecomp {
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn n_nodes(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Column `i` of `U` (0-based).
    pub fn eigenvector(&self, i: usize) -> Signal {
        self.basis.column(i).into_owned()
    }

    /// `x̂ = Uᵀ x`.
    pub fn gft(&self, x: &Signal) -> Result<Signal> {
        check_len(self.n_nodes(), x.len())?;
        Ok(self.basis.tr_mul(x))
    }

    /// `x = U x̂`.
    pub fn igft(&self, spectrum: &Signal) -> Result<Signal> {
        check_len(self.n_nodes(), spectrum.len())?;
        Ok(&self.basis * spectrum)
    }

    /// Applies the graph filter `U diag(response) Uᵀ` to `x`.
    pub fn filter(&self, response: &[f64], x: &Signal) -> Result<Signal> {
        check_len(self.n_nodes(), response.len())?;
        let mut coeffs = self.gft(x)?;
        for (c, h) in coeffs.iter_mut().zip(response) {
            *c *= h;
        }
        self.igft(&coeffs)
    }

    /// Number of eigenvalues with magnitude at most `tol`.
    pub fn null_dimension(&self, tol: f64) -> usize {
        self.eigenvalues.iter().filter(|l| l.abs() <= tol).count()
    }

    /// Frobenius norms of `UᵀU − I` and of `UΛUᵀ − L` relative to `‖L‖_F`.
    pub fn residuals(&self, lap: &Laplacian) -> (f64, f64) {
        let n = self.n_nodes();
        let ortho = (self.basis.tr_mul(&self.basis) - DMatrix::<f64>::identity(n, n)).norm();
        let recon = &self.basis * DMatrix::from_diagonal(&self.eigenvalues) * self.basis.transpose();
        let l_norm = lap.matrix().norm();
        let rel = if l_norm > 0.0 {
            (recon - lap.matrix()).norm() / l_norm
        } else {
            recon.norm()
        };
        (ortho, rel)
    }
}

/// Full symmetric eigendecomposition with the default tolerance.
pub fn eigendecompose(lap: &Laplacian) -> Result<SpectralDecomp> {
    eigendecompose_with_tol(lap, DECOMPOSITION_TOL)
}

/// Eigenvalues come out ascending (stable with respect to solver order on
/// ties) and every eigenvector is signed so its largest-magnitude entry is
/// positive.
pub fn eigendecompose_with_tol(lap: &Laplacian, tol: f64) -> Result<SpectralDecomp> {
    let n = lap.n_nodes();
    let eig = SymmetricEigen::try_new(lap.matrix().clone(), f64::EPSILON, MAX_SWEEPS)
        .ok_or_else(|| {
            Error::Numerical(format!(
                "symmetric eigensolver did not converge within {MAX_SWEEPS} iterations (n = {n})"
            ))
        })?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut basis = DMatrix::zeros(n, n);
    let mut eigenvalues = DVector::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let mut pivot = 0;
        for i in 1..n {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        basis.set_column(dst, &(col * sign));
        eigenvalues[dst] = eig.eigenvalues[src];
    }

    let decomp = SpectralDecomp { basis, eigenvalues };
    let (ortho, recon) = decomp.residuals(lap);
    if !(ortho <= tol) || !(recon <= tol) {
        return Err(Error::Numerical(format!(
            "eigendecomposition residuals too large: orthonormality {ortho:e}, reconstruction {recon:e}"
        )));
    }
    Ok(decomp)
}
