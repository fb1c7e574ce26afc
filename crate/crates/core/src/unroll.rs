//! Unrolled RED with per-layer learnable parameters.
//!
//! Parameters are stored as positive `α` values. Training works on an
//! unconstrained vector `θ` with `α = softplus(θ) = ln(1 + eᶿ)`, laid out as
//! `[α_red⁽⁰…ᴷ⁾, α_denoiser⁽⁰…ᴷ⁾, ρ⁽⁰…ᴷ⁾ (PnP only)]`.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::denoise::{Denoiser, DenoiserKind, GraphDenoiser, GraphOperator, PreparedDenoiser};
use crate::error::{check_len, Error, Result};
use crate::red::{red_cg_solve, RedCgOptions, RedLayer, STAGNATION_RATIO};
use crate::Signal;

/// Default number of unrolled layers.
pub const DEFAULT_LAYERS: usize = 10;

pub fn softplus(theta: f64) -> f64 {
    let v = theta.max(0.0) + libm::log1p(libm::exp(-theta.abs()));
    v.max(f64::MIN_POSITIVE)
}

/// Inverse of [`softplus`] for `alpha > 0`.
pub fn softplus_inverse(alpha: f64) -> f64 {
    // ln(eᵃ − 1) = a + ln(1 − e⁻ᵃ)
    alpha + libm::log(-libm::expm1(-alpha))
}

/// `d softplus / dθ`, the logistic function.
pub fn softplus_derivative(theta: f64) -> f64 {
    if theta >= 0.0 {
        1.0 / (1.0 + libm::exp(-theta))
    } else {
        let e = libm::exp(theta);
        e / (1.0 + e)
    }
}

/// Per-layer parameters of a `K`-layer unrolled solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnrolledParams {
    #[serde(rename = "K")]
    pub k: usize,
    pub denoiser_kind: DenoiserKind,
    pub alpha_red_layers: Vec<f64>,
    pub alpha_denoiser_layers: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pnp_rho_layers: Option<Vec<f64>>,
}

impl UnrolledParams {
    /// All layers share the same scalars. `rho` is required for PnP.
    pub fn flat(k: usize, kind: DenoiserKind, alpha_red: f64, alpha_denoiser: f64, rho: Option<f64>) -> Result<Self> {
        let rho_layers = match (kind, rho) {
            (DenoiserKind::Lr, _) => None,
            (DenoiserKind::Pnp, Some(r)) => Some(alloc::vec![r; k + 1]),
            (DenoiserKind::Pnp, None) => {
                return Err(Error::Parameter("PnP parameters need a rho value".into()))
            }
        };
        let p = Self {
            k,
            denoiser_kind: kind,
            alpha_red_layers: alloc::vec![alpha_red; k + 1],
            alpha_denoiser_layers: alloc::vec![alpha_denoiser; k + 1],
            pnp_rho_layers: rho_layers,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Parameter("unrolled solver needs K >= 1".into()));
        }
        let check = |name: &str, v: &[f64]| -> Result<()> {
            if v.len() != self.k + 1 {
                return Err(Error::Parameter(format!(
                    "{name} has {} entries, expected K + 1 = {}",
                    v.len(),
                    self.k + 1
                )));
            }
            if let Some(bad) = v.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
                return Err(Error::Parameter(format!("{name} contains non-positive value {bad}")));
            }
            Ok(())
        };
        check("alpha_red_layers", &self.alpha_red_layers)?;
        check("alpha_denoiser_layers", &self.alpha_denoiser_layers)?;
        match (self.denoiser_kind, &self.pnp_rho_layers) {
            (DenoiserKind::Pnp, Some(r)) => check("pnp_rho_layers", r),
            (DenoiserKind::Pnp, None) => Err(Error::Parameter("PnP parameters need pnp_rho_layers".into())),
            (DenoiserKind::Lr, Some(_)) => Err(Error::Parameter("LR parameters must not carry pnp_rho_layers".into())),
            (DenoiserKind::Lr, None) => Ok(()),
        }
    }

    /// `2(K+1)` for LR, `3(K+1)` for PnP.
    pub fn trainable_count(&self) -> usize {
        self.alpha_red_layers.len()
            + self.alpha_denoiser_layers.len()
            + self.pnp_rho_layers.as_ref().map_or(0, Vec::len)
    }

    pub fn to_theta(&self) -> Vec<f64> {
        self.alpha_red_layers
            .iter()
            .chain(&self.alpha_denoiser_layers)
            .chain(self.pnp_rho_layers.iter().flatten())
            .map(|&a| softplus_inverse(a))
            .collect()
    }

    pub fn from_theta(k: usize, kind: DenoiserKind, theta: &[f64]) -> Result<Self> {
        let per = k + 1;
        let expected = match kind {
            DenoiserKind::Lr => 2 * per,
            DenoiserKind::Pnp => 3 * per,
        };
        check_len(expected, theta.len())?;
        let alpha: Vec<f64> = theta.iter().map(|&t| softplus(t)).collect();
        let p = Self {
            k,
            denoiser_kind: kind,
            alpha_red_layers: alpha[..per].to_vec(),
            alpha_denoiser_layers: alpha[per..2 * per].to_vec(),
            pnp_rho_layers: (kind == DenoiserKind::Pnp).then(|| alpha[2 * per..].to_vec()),
        };
        p.validate()?;
        Ok(p)
    }

    /// The denoiser used at `layer`, with everything but the learned
    /// scalars taken from `template`.
    pub fn layer_denoiser(&self, layer: usize, template: &Denoiser) -> Denoiser {
        let mut d = *template;
        d.kind = self.denoiser_kind;
        d.alpha = self.alpha_denoiser_layers[layer];
        if let Some(r) = &self.pnp_rho_layers {
            d.rho = r[layer];
        }
        d
    }
}

/// Runs the `K`-layer unrolled solver. `template` supplies PnP iteration
/// count, x-update mode and LR solve method.
pub fn unrolled_forward(
    y: &Signal,
    params: &UnrolledParams,
    op: GraphOperator<'_>,
    template: &Denoiser,
    options: RedCgOptions,
) -> Result<Signal> {
    params.validate()?;
    let prepared: Vec<PreparedDenoiser<'_>> = (0..=params.k)
        .map(|l| params.layer_denoiser(l, template).prepare(op))
        .collect::<Result<_>>()?;
    let layers: Vec<RedLayer<'_>> = prepared
        .iter()
        .zip(&params.alpha_red_layers)
        .map(|(d, &a)| RedLayer {
            alpha_red: a,
            denoiser: d as &dyn GraphDenoiser,
        })
        .collect();
    Ok(red_cg_solve(y, &layers, options)?.x)
}

/// Output of the LR unrolled solver together with `∂x/∂α_p` for every
/// parameter `p` in `θ` order.
pub struct Tangents {
    pub x: Signal,
    pub dx: Vec<Signal>,
}

/// Forward-mode differentiation of the LR unrolled solver.
///
/// Mirrors [`red_cg_solve`] step for step (including its early exits),
/// propagating a tangent per parameter alongside each iterate.
pub fn unrolled_forward_tangents(
    y: &Signal,
    params: &UnrolledParams,
    op: GraphOperator<'_>,
    template: &Denoiser,
    options: RedCgOptions,
) -> Result<Tangents> {
    params.validate()?;
    if params.denoiser_kind != DenoiserKind::Lr {
        return Err(Error::Parameter("analytic tangents are only available for LR".into()));
    }
    check_len(op.n_nodes(), y.len())?;
    let k_max = params.k;
    let n_params = params.trainable_count();
    let n = y.len();
    let red_idx = |k: usize| k;
    let den_idx = |k: usize| k_max + 1 + k;

    let dens: Vec<PreparedDenoiser<'_>> = (0..=k_max)
        .map(|l| params.layer_denoiser(l, template).prepare(op))
        .collect::<Result<_>>()?;
    let zeros = || alloc::vec![Signal::zeros(n); n_params];

    // ∇ = x − y + a(x − G x), with tangent
    // T∇ = Tx + a(Tx − G Tx) + e_red (x − Gx) − e_den a G'(x)
    let grad_and_tangent = |k: usize, x: &Signal, tx: &[Signal]| -> Result<(Signal, Vec<Signal>)> {
        let a = params.alpha_red_layers[k];
        let g = &dens[k];
        let gx = g.denoise(x)?;
        let grad = (x - y) + (x - &gx) * a;
        let mut t = Vec::with_capacity(n_params);
        for txp in tx {
            t.push(txp * (1.0 + a) - g.denoise(txp)? * a);
        }
        t[red_idx(k)] += x - &gx;
        t[den_idx(k)] -= g.lr_alpha_derivative(x)? * a;
        Ok((grad, t))
    };

    let mut x = if options.warm_start { y.clone() } else { Signal::zeros(n) };
    let mut tx = zeros();
    let (mut grad, mut tgrad) = grad_and_tangent(0, &x, &tx)?;
    let mut grad_sq = grad.norm_squared();
    let mut dir = -&grad;
    let mut tdir: Vec<Signal> = tgrad.iter().map(|t| -t).collect();

    for k in 1..=k_max {
        if grad_sq == 0.0 {
            break;
        }
        let a = params.alpha_red_layers[k];
        let g = &dens[k];
        let gd = g.denoise(&dir)?;
        let q = &dir * (1.0 + a) - &gd * a;
        let curvature = dir.dot(&q);
        if !(curvature.abs() > STAGNATION_RATIO * dir.norm_squared()) {
            break;
        }
        let lin = dir.dot(&grad);
        let tau = -lin / curvature;

        let g_prime_dir = g.lr_alpha_derivative(&dir)?;
        let mut ttau = Vec::with_capacity(n_params);
        for p in 0..n_params {
            let mut tq = &tdir[p] * (1.0 + a) - g.denoise(&tdir[p])? * a;
            if p == red_idx(k) {
                tq += &dir - &gd;
            }
            if p == den_idx(k) {
                tq -= &g_prime_dir * a;
            }
            let t_curv = tdir[p].dot(&q) + dir.dot(&tq);
            let t_lin = tdir[p].dot(&grad) + dir.dot(&tgrad[p]);
            ttau.push(-(t_lin * curvature - lin * t_curv) / (curvature * curvature));
        }

        x.axpy(tau, &dir, 1.0);
        for p in 0..n_params {
            tx[p].axpy(ttau[p], &dir, 1.0);
            tx[p].axpy(tau, &tdir[p], 1.0);
        }

        let (new_grad, tnew) = grad_and_tangent(k, &x, &tx)?;
        let new_sq = new_grad.norm_squared();
        let gamma = new_sq / grad_sq;
        let mut new_tdir = Vec::with_capacity(n_params);
        for p in 0..n_params {
            let t_new_sq = 2.0 * new_grad.dot(&tnew[p]);
            let t_old_sq = 2.0 * grad.dot(&tgrad[p]);
            let tgamma = (t_new_sq * grad_sq - new_sq * t_old_sq) / (grad_sq * grad_sq);
            new_tdir.push(&dir * tgamma + &tdir[p] * gamma - &tnew[p]);
        }
        dir = &dir * gamma - &new_grad;
        tdir = new_tdir;
        grad = new_grad;
        tgrad = tnew;
        grad_sq = new_sq;
    }
    Ok(Tangents { x, dx: tx })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoise::GraphOperator;
    use crate::graph::Graph;
    use crate::red::RedProblem;
    use alloc::vec;

    #[test]
    fn softplus_round_trip() {
        for a in [1e-6, 1e-3, 0.5, 1.0, 7.0, 40.0, 900.0] {
            let t = softplus_inverse(a);
            assert!((softplus(t) - a).abs() <= 1e-12 * a.max(1.0), "{a}");
        }
        assert!(softplus(-800.0) > 0.0);
        assert!((softplus_derivative(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn table_one_counts() {
        let lr = UnrolledParams::flat(10, DenoiserKind::Lr, 1.0, 1.0, None).unwrap();
        let pnp = UnrolledParams::flat(10, DenoiserKind::Pnp, 1.0, 1.0, Some(1.0)).unwrap();
        assert_eq!(lr.trainable_count(), 22);
        assert_eq!(pnp.trainable_count(), 33);
        assert_eq!(lr.to_theta().len(), 22);
        assert_eq!(pnp.to_theta().len(), 33);
    }

    #[test]
    fn validation() {
        assert!(UnrolledParams::flat(0, DenoiserKind::Lr, 1.0, 1.0, None).is_err());
        assert!(UnrolledParams::flat(3, DenoiserKind::Pnp, 1.0, 1.0, None).is_err());
        assert!(UnrolledParams::flat(3, DenoiserKind::Lr, -1.0, 1.0, None).is_err());
        let mut p = UnrolledParams::flat(3, DenoiserKind::Lr, 1.0, 1.0, None).unwrap();
        p.alpha_red_layers.pop();
        assert!(p.validate().is_err());
    }

    #[test]
    fn flat_params_match_scalar_solver() {
        let g = Graph::from_edges(4, [(0, 1, 1.0), (1, 2, 0.4), (2, 3, 0.9), (0, 3, 0.2)]).unwrap();
        let lap = g.laplacian();
        let op = GraphOperator::Vertex(&lap);
        let y = Signal::from_vec(vec![1.0, -0.5, 2.0, 0.3]);
        let template = Denoiser::lr(1.0);
        let params = UnrolledParams::flat(3, DenoiserKind::Lr, 0.8, 1.7, None).unwrap();
        let x = unrolled_forward(&y, &params, op, &template, RedCgOptions::default()).unwrap();
        let d = Denoiser::lr(1.7).prepare(op).unwrap();
        let reference = RedProblem::new(&y, 0.8, &d).unwrap().cg_solve(3).unwrap().x;
        assert_eq!(x, reference);
    }
}
