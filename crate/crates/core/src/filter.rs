//! Frequency responses of the LR regularizer gradient and the RED
//! regularizer gradient.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::spectral::SpectralDecomp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterResponse {
    pub eigenvalues: Vec<f64>,
    pub response: Vec<f64>,
    pub label: String,
}

fn check_alpha(name: &str, a: f64) -> Result<()> {
    if a > 0.0 && a.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(alloc::format!("{name} must be positive, got {a}")))
    }
}

/// `h_lr(λ) = α_lr·λ`.
pub fn h_lr(lambdas: &[f64], alpha_lr: f64) -> Result<FilterResponse> {
    check_alpha("alpha_lr", alpha_lr)?;
    Ok(FilterResponse {
        eigenvalues: lambdas.to_vec(),
        response: lambdas.iter().map(|l| alpha_lr * l).collect(),
        label: "h_lr".into(),
    })
}

/// `h_red(λ) = α_red·α_lr·λ / (1 + α_lr·λ)`.
pub fn h_red(lambdas: &[f64], alpha_red: f64, alpha_lr: f64) -> Result<FilterResponse> {
    check_alpha("alpha_red", alpha_red)?;
    check_alpha("alpha_lr", alpha_lr)?;
    Ok(FilterResponse {
        eigenvalues: lambdas.to_vec(),
        response: lambdas
            .iter()
            .map(|l| {
                let s = alpha_lr * l;
                alpha_red * s / (1.0 + s)
            })
            .collect(),
        label: "h_red".into(),
    })
}

/// One `(λ, h_lr(λ), h_red(λ))` row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseRow {
    pub lambda: f64,
    pub h_lr: f64,
    pub h_red: f64,
}

/// Both responses evaluated at each of `lambdas`.
pub fn compare_at(lambdas: &[f64], alpha_red: f64, alpha_lr: f64) -> Result<Vec<ResponseRow>> {
    let lr = h_lr(lambdas, alpha_lr)?;
    let red = h_red(lambdas, alpha_red, alpha_lr)?;
    Ok(lambdas
        .iter()
        .zip(lr.response.iter().zip(&red.response))
        .map(|(&lambda, (&h_lr, &h_red))| ResponseRow { lambda, h_lr, h_red })
        .collect())
}

/// Both responses at the eigenvalues of a graph.
pub fn compare_responses(decomp: &SpectralDecomp, alpha_red: f64, alpha_lr: f64) -> Result<Vec<ResponseRow>> {
    compare_at(decomp.eigenvalues().as_slice(), alpha_red, alpha_lr)
}

/// `n` evenly spaced values on `[0, max]`.
pub fn lambda_grid(max: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(max > 0.0) {
        return Err(Error::Parameter("lambda grid needs n >= 2 and max > 0".into()));
    }
    Ok((0..n).map(|i| max * i as f64 / (n - 1) as f64).collect())
}

impl FilterResponse {
    pub fn validate(&self) -> Result<()> {
        check_len(self.eigenvalues.len(), self.response.len())?;
        if self.response.iter().any(|r| !r.is_finite()) {
            return Err(Error::Numerical("non-finite filter response".into()));
        }
        Ok(())
    }
}
