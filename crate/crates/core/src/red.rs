//! Regularization by denoising on graphs.
//!
//! The objective is `½‖x − y‖² + (α/2)·xᵀ(x − D(x))`. For admissible
//! denoisers (locally homogeneous, strongly passive) its gradient is
//! `x − y + α(x − D(x))`, which is all the solvers here ever evaluate.

use alloc::format;
use alloc::vec::Vec;

use serde::{Serialize, Serializer};

use crate::denoise::GraphDenoiser;
use crate::error::{check_len, Error, Result};
use crate::Signal;

/// Stagnation threshold on `|Δᵀ A Δ| / ‖Δ‖²` in the CG line search.
pub const STAGNATION_RATIO: f64 = 1e-14;

/// Gradient descent aborts when the objective exceeds this multiple of its
/// initial value.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// A denoising problem: observation, RED weight and inner denoiser.
pub struct RedProblem<'a, D> {
    pub y: &'a Signal,
    pub alpha_red: f64,
    pub denoiser: D,
}

/// Why a RED solve stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// Ran every requested iteration.
    Completed,
    /// The gradient vanished exactly.
    Converged,
    /// The search direction fell into the null space of the line-search
    /// quadratic; iterations stopped early.
    Stagnated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RedSolveReport {
    #[serde(serialize_with = "signal_as_seq")]
    pub x: Signal,
    pub iterations: usize,
    pub gradient_norm_history: Vec<f64>,
    pub objective_history: Vec<f64>,
    pub stop: StopReason,
}

fn signal_as_seq<S: Serializer>(x: &Signal, s: S) -> core::result::Result<S::Ok, S::Error> {
    s.collect_seq(x.iter())
}

/// One unrolled layer: the RED weight and the denoiser used at that step.
#[derive(Clone, Copy)]
pub struct RedLayer<'d> {
    pub alpha_red: f64,
    pub denoiser: &'d dyn GraphDenoiser,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RedCgOptions {
    /// Start from `y` instead of zero.
    pub warm_start: bool,
}

fn objective_with(y: &Signal, alpha_red: f64, x: &Signal, dx: &Signal) -> f64 {
    0.5 * (x - y).norm_squared() + 0.5 * alpha_red * x.dot(&(x - dx))
}

fn gradient_with(y: &Signal, alpha_red: f64, x: &Signal, dx: &Signal) -> Signal {
    (x - y) + (x - dx) * alpha_red
}

fn ensure_finite(v: &Signal, iteration: usize, what: &str) -> Result<()> {
    if v.iter().all(|t| t.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence {
            iteration,
            reason: format!("non-finite {what}"),
        })
    }
}

impl<'a, D: GraphDenoiser> RedProblem<'a, D> {
    pub fn new(y: &'a Signal, alpha_red: f64, denoiser: D) -> Result<Self> {
        if !(alpha_red >= 0.0) || !alpha_red.is_finite() {
            return Err(Error::Parameter(format!("alpha_red must be nonnegative, got {alpha_red}")));
        }
        check_len(denoiser.dim(), y.len())?;
        Ok(Self { y, alpha_red, denoiser })
    }

    fn denoise(&self, x: &Signal) -> Result<Signal> {
        check_len(self.y.len(), x.len())?;
        let dx = self.denoiser.denoise(x)?;
        ensure_finite(&dx, 0, "denoiser output")?;
        Ok(dx)
    }

    pub fn objective(&self, x: &Signal) -> Result<f64> {
        let dx = self.denoise(x)?;
        Ok(objective_with(self.y, self.alpha_red, x, &dx))
    }

    /// `x − y + α_red (x − D(x))`.
    pub fn gradient(&self, x: &Signal) -> Result<Signal> {
        let dx = self.denoise(x)?;
        Ok(gradient_with(self.y, self.alpha_red, x, &dx))
    }

    /// Fixed-step gradient descent from `x⁽⁰⁾ = 0`.
    pub fn gradient_descent(&self, step: f64, iters: usize) -> Result<RedSolveReport> {
        if !(step > 0.0) {
            return Err(Error::Parameter(format!("step size must be positive, got {step}")));
        }
        let mut x = Signal::zeros(self.y.len());
        let dx = self.denoise(&x)?;
        let obj0 = objective_with(self.y, self.alpha_red, &x, &dx);
        let mut grad = gradient_with(self.y, self.alpha_red, &x, &dx);
        let mut objective_history = alloc::vec![obj0];
        let mut gradient_norm_history = alloc::vec![grad.norm()];
        for it in 1..=iters {
            x.axpy(-step, &grad, 1.0);
            let dx = self.denoise(&x)?;
            let obj = objective_with(self.y, self.alpha_red, &x, &dx);
            if !obj.is_finite() || (obj0 > 0.0 && obj > DIVERGENCE_FACTOR * obj0) {
                return Err(Error::Divergence {
                    iteration: it,
                    reason: format!("objective grew to {obj:e} from {obj0:e}; try a smaller step size"),
                });
            }
            grad = gradient_with(self.y, self.alpha_red, &x, &dx);
            objective_history.push(obj);
            gradient_norm_history.push(grad.norm());
        }
        Ok(RedSolveReport {
            x,
            iterations: iters,
            gradient_norm_history,
            objective_history,
            stop: StopReason::Completed,
        })
    }

    /// Conjugate-gradient RED with the same weight and denoiser at all `k + 1`
    /// layers.
    pub fn cg_solve(&self, k: usize) -> Result<RedSolveReport> {
        let layer = RedLayer {
            alpha_red: self.alpha_red,
            denoiser: &self.denoiser,
        };
        let layers = alloc::vec![layer; k + 1];
        red_cg_solve(self.y, &layers, RedCgOptions::default())
    }
}

/// Conjugate-gradient RED with per-layer parameters.
///
/// `layers[0]` parameterizes the initial gradient, `layers[k]` the `k`-th
/// loop iteration, so `K = layers.len() − 1`. Each iteration takes an
/// exact line-search step along `x_Δ`, treating `x ↦ x + α(x − D(x))` as
/// linear (exact for LR), then a Fletcher–Reeves direction update.
pub fn red_cg_solve(y: &Signal, layers: &[RedLayer<'_>], options: RedCgOptions) -> Result<RedSolveReport> {
    if layers.len() < 2 {
        return Err(Error::Parameter(format!(
            "need K >= 1 (K + 1 layers), got {} layers",
            layers.len()
        )));
    }
    for (i, l) in layers.iter().enumerate() {
        if !(l.alpha_red >= 0.0) || !l.alpha_red.is_finite() {
            return Err(Error::Parameter(format!(
                "alpha_red at layer {i} must be nonnegative, got {}",
                l.alpha_red
            )));
        }
        check_len(y.len(), l.denoiser.dim())?;
    }

    let mut x = if options.warm_start {
        y.clone()
    } else {
        Signal::zeros(y.len())
    };
    let a0 = layers[0].alpha_red;
    let dx = layers[0].denoiser.denoise(&x)?;
    ensure_finite(&dx, 0, "denoiser output")?;
    let mut grad = gradient_with(y, a0, &x, &dx);
    let mut grad_sq = grad.norm_squared();
    let mut objective_history = alloc::vec![objective_with(y, a0, &x, &dx)];
    let mut gradient_norm_history = alloc::vec![libm::sqrt(grad_sq)];
    let mut dir = -&grad;
    let mut stop = StopReason::Completed;
    let mut iterations = 0;

    for (k, layer) in layers.iter().enumerate().skip(1) {
        if grad_sq == 0.0 {
            stop = StopReason::Converged;
            break;
        }
        let a = layer.alpha_red;
        let d_dir = layer.denoiser.denoise(&dir)?;
        ensure_finite(&d_dir, k, "denoiser output")?;
        let curvature = dir.dot(&(&dir + (&dir - &d_dir) * a));
        if !(curvature.abs() > STAGNATION_RATIO * dir.norm_squared()) {
            stop = StopReason::Stagnated;
            break;
        }
        let tau = -dir.dot(&grad) / curvature;
        x.axpy(tau, &dir, 1.0);

        let dx = layer.denoiser.denoise(&x)?;
        ensure_finite(&dx, k, "denoiser output")?;
        let new_grad = gradient_with(y, a, &x, &dx);
        ensure_finite(&new_grad, k, "gradient")?;
        let new_sq = new_grad.norm_squared();
        objective_history.push(objective_with(y, a, &x, &dx));
        gradient_norm_history.push(libm::sqrt(new_sq));

        let gamma = new_sq / grad_sq;
        dir = &dir * gamma - &new_grad;
        grad = new_grad;
        grad_sq = new_sq;
        iterations = k;
    }
    debug_assert_eq!(iterations + 1, objective_history.len());

    Ok(RedSolveReport {
        x,
        iterations,
        gradient_norm_history,
        objective_history,
        stop,
    })
}

/// `‖D(c·x) − c·D(x)‖ / ‖c·D(x)‖`.
pub fn check_homogeneity<D: GraphDenoiser>(denoiser: &D, x: &Signal, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::UndefinedCheck(format!("scale c must be positive, got {c}")));
    }
    if x.norm() == 0.0 {
        return Err(Error::UndefinedCheck("homogeneity probe is the zero signal".into()));
    }
    let scaled = denoiser.denoise(&(x * c))?;
    let reference = denoiser.denoise(x)? * c;
    let denom = reference.norm();
    if denom == 0.0 {
        return Err(Error::UndefinedCheck("denoiser maps the probe to zero".into()));
    }
    Ok((scaled - &reference).norm() / denom)
}

/// `‖D(x)‖² / ‖x‖²`.
pub fn check_passivity<D: GraphDenoiser>(denoiser: &D, x: &Signal) -> Result<f64> {
    let xx = x.norm_squared();
    if xx == 0.0 {
        return Err(Error::UndefinedCheck("passivity probe is the zero signal".into()));
    }
    Ok(denoiser.denoise(x)?.norm_squared() / xx)
}
