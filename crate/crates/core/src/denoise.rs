//! Internal graph denoisers: Laplacian regularization and PnP-ADMM.
//!
//! A [`Denoiser`] is a plain configuration. [`Denoiser::prepare`] binds it to
//! a [`GraphOperator`] and does any per-`α` work up front (a Cholesky factor
//! for direct solves, spectral gains in the GFT domain), so repeated
//! applications inside an iterative solver are cheap.

use alloc::format;

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::cg::conjugate_gradient;
use crate::error::{check_len, Error, Result};
use crate::graph::Laplacian;
use crate::Signal;

/// Default PnP-ADMM iteration count.
pub const DEFAULT_PNP_ITERS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DenoiserKind {
    Lr,
    Pnp,
}

impl DenoiserKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DenoiserKind::Lr => "lr",
            DenoiserKind::Pnp => "pnp",
        }
    }

    /// Scalar hyperparameters of the standalone denoiser (α, plus ρ for PnP).
    pub fn scalar_count(self) -> usize {
        match self {
            DenoiserKind::Lr => 1,
            DenoiserKind::Pnp => 2,
        }
    }
}

/// How `(I + αL) x = y` is solved on the vertex domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrSolve {
    Direct,
    Cg,
}

/// Which signal the PnP x-update anchors to.
///
/// `Observation` uses `(y + ρ(v − u)) / (1 + ρ)`, the minimizer of the
/// x-subproblem. `PreviousIterate` uses `(x⁽ᵏ⁾ + ρ(v − u)) / (1 + ρ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum XUpdate {
    Observation,
    PreviousIterate,
}

/// The linear operator a denoiser runs against.
///
/// `Spectral` holds Laplacian eigenvalues; signals passed to a denoiser
/// prepared on it must be GFT coefficients. Because `U` is orthogonal,
/// every solver in this crate gives the same answer (up to round-off) in
/// either domain for LR-based denoisers, at O(N) per application.
#[derive(Debug, Clone, Copy)]
pub enum GraphOperator<'a> {
    Vertex(&'a Laplacian),
    Spectral(&'a [f64]),
}

impl GraphOperator<'_> {
    pub fn n_nodes(&self) -> usize {
        match self {
            GraphOperator::Vertex(l) => l.n_nodes(),
            GraphOperator::Spectral(l) => l.len(),
        }
    }
}

/// Denoiser configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Denoiser {
    pub kind: DenoiserKind,
    /// `α_lr` for LR, `α_pnp` (the inner LR strength) for PnP.
    pub alpha: f64,
    pub rho: f64,
    pub pnp_iters: usize,
    pub lr_solve: LrSolve,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    pub x_update: XUpdate,
}

impl Denoiser {
    pub fn lr(alpha: f64) -> Self {
        Self {
            kind: DenoiserKind::Lr,
            alpha,
            rho: 1.0,
            pnp_iters: DEFAULT_PNP_ITERS,
            lr_solve: LrSolve::Direct,
            cg_tol: 1e-10,
            cg_max_iters: 10_000,
            x_update: XUpdate::Observation,
        }
    }

    pub fn pnp(alpha: f64, rho: f64) -> Self {
        Self {
            kind: DenoiserKind::Pnp,
            rho,
            ..Self::lr(alpha)
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    pub fn with_pnp_iters(mut self, iters: usize) -> Self {
        self.pnp_iters = iters;
        self
    }

    pub fn with_lr_solve(mut self, solve: LrSolve) -> Self {
        self.lr_solve = solve;
        self
    }

    pub fn with_cg(mut self, tol: f64, max_iters: usize) -> Self {
        self.lr_solve = LrSolve::Cg;
        self.cg_tol = tol;
        self.cg_max_iters = max_iters;
        self
    }

    pub fn with_x_update(mut self, x_update: XUpdate) -> Self {
        self.x_update = x_update;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::Parameter(format!(
                "denoiser alpha must be positive and finite, got {}",
                self.alpha
            )));
        }
        if self.kind == DenoiserKind::Pnp {
            if !(self.rho > 0.0) || !self.rho.is_finite() {
                return Err(Error::Parameter(format!("PnP rho must be positive, got {}", self.rho)));
            }
            if self.pnp_iters == 0 {
                return Err(Error::Parameter("PnP needs at least one iteration".into()));
            }
        }
        Ok(())
    }

    pub fn prepare<'a>(&self, op: GraphOperator<'a>) -> Result<PreparedDenoiser<'a>> {
        self.validate()?;
        let lr = LrKernel::new(op, self.alpha, self.lr_solve, self.cg_tol, self.cg_max_iters)?;
        let pnp = match self.kind {
            DenoiserKind::Lr => None,
            DenoiserKind::Pnp => Some(PnpSettings {
                rho: self.rho,
                iters: self.pnp_iters,
                x_update: self.x_update,
            }),
        };
        Ok(PreparedDenoiser { lr, pnp })
    }

    /// One-shot convenience: prepare and apply.
    pub fn apply(&self, op: GraphOperator<'_>, x: &Signal) -> Result<Signal> {
        self.prepare(op)?.denoise(x)
    }
}

/// A signal-to-signal map usable inside RED.
pub trait GraphDenoiser {
    fn dim(&self) -> usize;
    fn denoise(&self, x: &Signal) -> Result<Signal>;
}

impl<D: GraphDenoiser + ?Sized> GraphDenoiser for &D {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn denoise(&self, x: &Signal) -> Result<Signal> {
        (**self).denoise(x)
    }
}

enum LrKernel<'a> {
    Identity(&'a Laplacian),
    Factored {
        chol: Cholesky<f64, Dyn>,
        lap: &'a Laplacian,
    },
    Iterative {
        lap: &'a Laplacian,
        alpha: f64,
        tol: f64,
        max_iters: usize,
    },
    /// Per-frequency gains `1 / (1 + αλ)`, plus `λ` for the α-derivative.
    Diagonal {
        gains: Signal,
        lambdas: &'a [f64],
    },
}

impl<'a> LrKernel<'a> {
    fn new(op: GraphOperator<'a>, alpha: f64, solve: LrSolve, tol: f64, max_iters: usize) -> Result<Self> {
        if !(alpha >= 0.0) {
            return Err(Error::Parameter(format!("LR alpha must be nonnegative, got {alpha}")));
        }
        Ok(match op {
            GraphOperator::Spectral(lambdas) => LrKernel::Diagonal {
                gains: Signal::from_iterator(lambdas.len(), lambdas.iter().map(|l| 1.0 / (1.0 + alpha * l))),
                lambdas,
            },
            GraphOperator::Vertex(lap) if alpha == 0.0 => LrKernel::Identity(lap),
            GraphOperator::Vertex(lap) => match solve {
                LrSolve::Direct => {
                    let n = lap.n_nodes();
                    let system = DMatrix::<f64>::identity(n, n) + lap.matrix() * alpha;
                    let chol = Cholesky::new(system).ok_or_else(|| {
                        Error::Numerical(format!("I + αL is not positive definite (α = {alpha})"))
                    })?;
                    LrKernel::Factored { chol, lap }
                }
                LrSolve::Cg => LrKernel::Iterative {
                    lap,
                    alpha,
                    tol,
                    max_iters,
                },
            },
        })
    }

    fn dim(&self) -> usize {
        match self {
            LrKernel::Identity(lap) | LrKernel::Factored { lap, .. } | LrKernel::Iterative { lap, .. } => {
                lap.n_nodes()
            }
            LrKernel::Diagonal { gains, .. } => gains.len(),
        }
    }

    fn solve(&self, y: &Signal) -> Result<Signal> {
        check_len(self.dim(), y.len())?;
        match self {
            LrKernel::Identity(_) => Ok(y.clone()),
            LrKernel::Factored { chol, .. } => Ok(chol.solve(y)),
            LrKernel::Iterative {
                lap,
                alpha,
                tol,
                max_iters,
            } => {
                let m = lap.matrix();
                conjugate_gradient(|v| v + (m * v) * *alpha, y, *tol, *max_iters).map(|s| s.x)
            }
            LrKernel::Diagonal { gains, .. } => Ok(y.component_mul(gains)),
        }
    }

    /// `∂/∂α (I + αL)⁻¹ y = −(I + αL)⁻¹ L (I + αL)⁻¹ y`.
    fn alpha_derivative(&self, y: &Signal) -> Result<Signal> {
        check_len(self.dim(), y.len())?;
        match self {
            LrKernel::Diagonal { gains, lambdas } => Ok(Signal::from_iterator(
                y.len(),
                y.iter()
                    .zip(gains.iter())
                    .zip(lambdas.iter())
                    .map(|((v, g), l)| -l * g * g * v),
            )),
            LrKernel::Identity(lap) | LrKernel::Factored { lap, .. } | LrKernel::Iterative { lap, .. } => {
                let g = self.solve(y)?;
                Ok(-self.solve(&(lap.matrix() * g))?)
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct PnpSettings {
    rho: f64,
    iters: usize,
    x_update: XUpdate,
}

/// A [`Denoiser`] bound to a graph operator.
pub struct PreparedDenoiser<'a> {
    lr: LrKernel<'a>,
    pnp: Option<PnpSettings>,
}

impl PreparedDenoiser<'_> {
    pub fn kind(&self) -> DenoiserKind {
        if self.pnp.is_some() {
            DenoiserKind::Pnp
        } else {
            DenoiserKind::Lr
        }
    }

    /// Derivative of the LR output with respect to its `α`, applied to `y`.
    /// Only defined for LR denoisers.
    pub fn lr_alpha_derivative(&self, y: &Signal) -> Result<Signal> {
        if self.pnp.is_some() {
            return Err(Error::Parameter("alpha derivative is only available for LR".into()));
        }
        self.lr.alpha_derivative(y)
    }
}

impl GraphDenoiser for PreparedDenoiser<'_> {
    fn dim(&self) -> usize {
        self.lr.dim()
    }

    fn denoise(&self, y: &Signal) -> Result<Signal> {
        match self.pnp {
            None => self.lr.solve(y),
            Some(p) => run_pnp(&self.lr, y, p),
        }
    }
}

/// PnP-ADMM from `x = v = y`, `u = 0`. Returns the last denoised iterate `v`.
fn run_pnp(lr: &LrKernel<'_>, y: &Signal, p: PnpSettings) -> Result<Signal> {
    check_len(lr.dim(), y.len())?;
    let scale = 1.0 / (1.0 + p.rho);
    let mut x = y.clone();
    let mut v = y.clone();
    let mut u = Signal::zeros(y.len());
    for k in 1..=p.iters {
        let anchor = match p.x_update {
            XUpdate::Observation => y,
            XUpdate::PreviousIterate => &x,
        };
        x = (anchor + (&v - &u) * p.rho) * scale;
        v = lr.solve(&(&x + &u))?;
        u += &x - &v;
        if x.iter().chain(v.iter()).chain(u.iter()).any(|t| !t.is_finite()) {
            return Err(Error::Divergence {
                iteration: k,
                reason: "non-finite PnP-ADMM iterate".into(),
            });
        }
    }
    Ok(v)
}

/// `(I + αL)⁻¹ y` by dense Cholesky. `α = 0` returns `y`.
pub fn lr_denoise(lap: &Laplacian, y: &Signal, alpha: f64) -> Result<Signal> {
    LrKernel::new(GraphOperator::Vertex(lap), alpha, LrSolve::Direct, 0.0, 0)?.solve(y)
}

/// `(I + αL)⁻¹ y` by conjugate gradient to relative residual `tol`.
pub fn lr_denoise_cg(lap: &Laplacian, y: &Signal, alpha: f64, tol: f64, max_iters: usize) -> Result<Signal> {
    if !(alpha >= 0.0) {
        return Err(Error::Parameter(format!("LR alpha must be nonnegative, got {alpha}")));
    }
    check_len(lap.n_nodes(), y.len())?;
    let m = lap.matrix();
    conjugate_gradient(|v| v + (m * v) * alpha, y, tol, max_iters).map(|s| s.x)
}

/// PnP-ADMM with an LR inner denoiser of strength `alpha`.
pub fn pnp_admm_denoise(
    lap: &Laplacian,
    y: &Signal,
    alpha: f64,
    rho: f64,
    iters: usize,
    x_update: XUpdate,
) -> Result<Signal> {
    Denoiser::pnp(alpha, rho)
        .with_pnp_iters(iters)
        .with_x_update(x_update)
        .apply(GraphOperator::Vertex(lap), y)
}
