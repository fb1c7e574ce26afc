//! Training of unrolled parameters with Adam.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::denoise::{Denoiser, DenoiserKind, GraphOperator};
use crate::error::{check_len, Error, Result};
use crate::metrics::mse;
use crate::red::RedCgOptions;
use crate::rng::{stream, Purpose};
use crate::unroll::{softplus_derivative, unrolled_forward, unrolled_forward_tangents, UnrolledParams};
use crate::Signal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: alloc::vec![0.0; n],
            v: alloc::vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }
}

/// One bias-corrected Adam update of `theta` in place.
pub fn adam_step(theta: &mut [f64], grad: &[f64], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    check_len(theta.len(), grad.len())?;
    check_len(theta.len(), state.m.len())?;
    state.t += 1;
    let c1 = 1.0 - libm::pow(cfg.beta1, state.t as f64);
    let c2 = 1.0 - libm::pow(cfg.beta2, state.t as f64);
    for i in 0..theta.len() {
        let g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        theta[i] -= cfg.learning_rate * m_hat / (libm::sqrt(v_hat) + cfg.epsilon);
    }
    Ok(())
}

/// Draws `σ ~ U[lo, hi]` and returns `(y + n, σ)` with `n ~ N(0, σ²I)`.
/// The target of the pair is `y` itself.
pub fn make_n2n_pair<R: Rng + ?Sized>(y: &Signal, sigma_range: (f64, f64), rng: &mut R) -> Result<(Signal, f64)> {
    let (lo, hi) = sigma_range;
    if !(lo >= 0.0) || !(hi >= lo) || !hi.is_finite() {
        return Err(Error::Parameter(format!("invalid sigma range [{lo}, {hi}]")));
    }
    let sigma = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    if sigma == 0.0 {
        return Ok((y.clone(), 0.0));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Parameter(format!("{e}")))?;
    Ok((y.map(|v| v + normal.sample(rng)), sigma))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    Supervised,
    Noise2noise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMethod {
    FiniteDifference,
    AnalyticLinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub epochs: usize,
    /// Epoch index of the first epoch, so a resumed run continues the
    /// Noise2Noise streams where it left off.
    pub start_epoch: usize,
    /// Noise2Noise σ is drawn from `[0, fraction · max|y|]`.
    pub n2n_fraction: f64,
    pub seed: u64,
    pub gradient_method: GradientMethod,
    pub fd_step: f64,
    pub adam: AdamConfig,
    pub warm_start: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Supervised,
            epochs: 200,
            start_epoch: 0,
            n2n_fraction: 0.4,
            seed: 0,
            gradient_method: GradientMethod::FiniteDifference,
            fd_step: 1e-5,
            adam: AdamConfig::default(),
            warm_start: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.adam.learning_rate > 0.0) {
            return Err(Error::Parameter("learning rate must be positive".into()));
        }
        if !(self.n2n_fraction >= 0.0) {
            return Err(Error::Parameter("Noise2Noise range must be nonnegative".into()));
        }
        if !(self.fd_step > 0.0) {
            return Err(Error::Parameter("finite-difference step must be positive".into()));
        }
        Ok(())
    }
}

/// One training signal on its graph.
#[derive(Clone)]
pub struct TrainSample<'a> {
    pub operator: GraphOperator<'a>,
    pub observed: Signal,
    pub clean: Option<Signal>,
    /// `max|y|` of the observation in the vertex domain.
    pub n2n_scale: f64,
}

impl<'a> TrainSample<'a> {
    /// `n2n_scale` is taken from `observed`, which is only right when the
    /// signals are in the vertex domain.
    pub fn new(operator: GraphOperator<'a>, observed: Signal, clean: Option<Signal>) -> Self {
        let n2n_scale = observed.amax();
        Self {
            operator,
            observed,
            clean,
            n2n_scale,
        }
    }

    pub fn with_n2n_scale(mut self, scale: f64) -> Self {
        self.n2n_scale = scale;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: UnrolledParams,
    /// Mean loss at the start of each epoch.
    pub loss_history: Vec<f64>,
    /// Mean loss at the returned parameters.
    pub final_loss: f64,
}

struct Pair<'s, 'a> {
    sample: &'s TrainSample<'a>,
    input: Signal,
    target: &'s Signal,
}

fn build_pairs<'s, 'a>(samples: &'s [TrainSample<'a>], cfg: &TrainConfig, epoch: usize) -> Result<Vec<Pair<'s, 'a>>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| match cfg.mode {
            TrainMode::Supervised => {
                let target = s
                    .clean
                    .as_ref()
                    .ok_or_else(|| Error::Parameter(format!("sample {i} has no clean target")))?;
                Ok(Pair {
                    sample: s,
                    input: s.observed.clone(),
                    target,
                })
            }
            TrainMode::Noise2noise => {
                let mut rng = stream(cfg.seed, i as u32, Purpose::Noise2Noise { epoch: epoch as u32 });
                let (input, _) = make_n2n_pair(&s.observed, (0.0, cfg.n2n_fraction * s.n2n_scale), &mut rng)?;
                Ok(Pair {
                    sample: s,
                    input,
                    target: &s.observed,
                })
            }
        })
        .collect()
}

fn mean_loss(pairs: &[Pair<'_, '_>], params: &UnrolledParams, template: &Denoiser, options: RedCgOptions) -> Result<f64> {
    let mut total = 0.0;
    for p in pairs {
        let x = unrolled_forward(&p.input, params, p.sample.operator, template, options)?;
        total += mse(&x, p.target)?;
    }
    Ok(total / pairs.len() as f64)
}

fn theta_loss(
    pairs: &[Pair<'_, '_>],
    k: usize,
    kind: DenoiserKind,
    theta: &[f64],
    template: &Denoiser,
    options: RedCgOptions,
) -> Result<f64> {
    let params = UnrolledParams::from_theta(k, kind, theta)?;
    mean_loss(pairs, &params, template, options)
}

fn fd_gradient(
    pairs: &[Pair<'_, '_>],
    k: usize,
    kind: DenoiserKind,
    theta: &[f64],
    template: &Denoiser,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    let options = RedCgOptions {
        warm_start: cfg.warm_start,
    };
    let mut probe = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        probe[i] = theta[i] + cfg.fd_step;
        let up = theta_loss(pairs, k, kind, &probe, template, options)?;
        probe[i] = theta[i] - cfg.fd_step;
        let down = theta_loss(pairs, k, kind, &probe, template, options)?;
        probe[i] = theta[i];
        grad.push((up - down) / (2.0 * cfg.fd_step));
    }
    Ok(grad)
}

fn analytic_gradient(
    pairs: &[Pair<'_, '_>],
    params: &UnrolledParams,
    theta: &[f64],
    template: &Denoiser,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    let options = RedCgOptions {
        warm_start: cfg.warm_start,
    };
    let mut grad = alloc::vec![0.0; theta.len()];
    for p in pairs {
        let t = unrolled_forward_tangents(&p.input, params, p.sample.operator, template, options)?;
        let resid = &t.x - p.target;
        let scale = 2.0 / resid.len() as f64;
        for (g, dx) in grad.iter_mut().zip(&t.dx) {
            *g += scale * resid.dot(dx);
        }
    }
    let n = pairs.len() as f64;
    for (g, &th) in grad.iter_mut().zip(theta) {
        *g *= softplus_derivative(th) / n;
    }
    Ok(grad)
}

/// Gradient of the mean loss with respect to `θ` for the given epoch's
/// training pairs.
pub fn loss_gradient(
    samples: &[TrainSample<'_>],
    params: &UnrolledParams,
    template: &Denoiser,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<Vec<f64>> {
    let pairs = build_pairs(samples, cfg, epoch)?;
    let theta = params.to_theta();
    match cfg.gradient_method {
        GradientMethod::FiniteDifference => fd_gradient(&pairs, params.k, params.denoiser_kind, &theta, template, cfg),
        GradientMethod::AnalyticLinear => analytic_gradient(&pairs, params, &theta, template, cfg),
    }
}

/// Mean training loss of `params` for the given epoch's pairs.
pub fn evaluate_loss(
    samples: &[TrainSample<'_>],
    params: &UnrolledParams,
    template: &Denoiser,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<f64> {
    let pairs = build_pairs(samples, cfg, epoch)?;
    mean_loss(&pairs, params, template, RedCgOptions { warm_start: cfg.warm_start })
}

/// Full-batch Adam on `θ`, starting from `init`.
pub fn train(
    samples: &[TrainSample<'_>],
    init: &UnrolledParams,
    template: &Denoiser,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    init.validate()?;
    if samples.is_empty() {
        return Err(Error::Parameter("training set is empty".into()));
    }
    if cfg.gradient_method == GradientMethod::AnalyticLinear && init.denoiser_kind != DenoiserKind::Lr {
        return Err(Error::Parameter("analytic gradients are only available for LR".into()));
    }
    let (k, kind) = (init.k, init.denoiser_kind);
    let options = RedCgOptions {
        warm_start: cfg.warm_start,
    };
    let mut theta = init.to_theta();
    let mut params = init.clone();
    let mut state = AdamState::new(theta.len());
    let mut history = Vec::with_capacity(cfg.epochs);

    let fail = |epoch: usize, e: Error| Error::Training {
        epoch,
        reason: format!("{e}"),
    };
    for epoch in cfg.start_epoch..cfg.start_epoch + cfg.epochs {
        let pairs = build_pairs(samples, cfg, epoch)?;
        let loss = mean_loss(&pairs, &params, template, options).map_err(|e| fail(epoch, e))?;
        if !loss.is_finite() {
            return Err(fail(epoch, Error::Numerical(format!("loss is {loss}"))));
        }
        history.push(loss);
        let grad = match cfg.gradient_method {
            GradientMethod::FiniteDifference => fd_gradient(&pairs, k, kind, &theta, template, cfg),
            GradientMethod::AnalyticLinear => analytic_gradient(&pairs, &params, &theta, template, cfg),
        }
        .map_err(|e| fail(epoch, e))?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(fail(epoch, Error::Numerical("non-finite gradient".into())));
        }
        adam_step(&mut theta, &grad, &mut state, &cfg.adam)?;
        params = UnrolledParams::from_theta(k, kind, &theta).map_err(|e| fail(epoch, e))?;
    }

    let end = cfg.start_epoch + cfg.epochs;
    let final_loss = evaluate_loss(samples, &params, template, cfg, end).map_err(|e| fail(end, e))?;
    if !final_loss.is_finite() {
        return Err(fail(end, Error::Numerical(format!("loss is {final_loss}"))));
    }
    Ok(TrainOutcome {
        params,
        loss_history: history,
        final_loss,
    })
}
