use crate::error::{check_len, Error, Result};
use crate::Signal;

/// `(1/N)‖x̂ − x*‖²`.
pub fn mse(estimate: &Signal, truth: &Signal) -> Result<f64> {
    check_len(truth.len(), estimate.len())?;
    if truth.is_empty() {
        return Err(Error::Dimension { expected: 1, got: 0 });
    }
    Ok((estimate - truth).norm_squared() / truth.len() as f64)
}

pub fn rmse(estimate: &Signal, truth: &Signal) -> Result<f64> {
    mse(estimate, truth).map(libm::sqrt)
}
