//! Denoising methods behind one interface, and exhaustive grid search over
//! their scalar hyperparameters.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::denoise::{Denoiser, DenoiserKind, GraphDenoiser, GraphOperator};
use crate::error::{check_len, Error, Result};
use crate::metrics::rmse;
use crate::red::{red_cg_solve, RedCgOptions, RedLayer};
use crate::train::TrainSample;
use crate::unroll::DEFAULT_LAYERS;
use crate::Signal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Lr,
    Pnp,
    RedLr,
    RedPnp,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Lr, Method::Pnp, Method::RedLr, Method::RedPnp];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Lr => "lr",
            Method::Pnp => "pnp",
            Method::RedLr => "red-lr",
            Method::RedPnp => "red-pnp",
        }
    }

    pub fn denoiser_kind(self) -> DenoiserKind {
        match self {
            Method::Lr | Method::RedLr => DenoiserKind::Lr,
            Method::Pnp | Method::RedPnp => DenoiserKind::Pnp,
        }
    }

    pub fn is_red(self) -> bool {
        matches!(self, Method::RedLr | Method::RedPnp)
    }
}

impl core::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown method `{s}`")))
    }
}

/// Scalar hyperparameters of a method. `rho` is used by PnP methods,
/// `alpha_red` by RED methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodParams {
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_red: Option<f64>,
}

impl MethodParams {
    pub fn denoiser(&self, method: Method, template: &Denoiser) -> Result<Denoiser> {
        let mut d = template.with_alpha(self.alpha);
        d.kind = method.denoiser_kind();
        if d.kind == DenoiserKind::Pnp {
            d.rho = self
                .rho
                .ok_or_else(|| Error::Parameter(format!("{} needs rho", method.as_str())))?;
        }
        d.validate()?;
        Ok(d)
    }

    fn alpha_red(&self, method: Method) -> Result<f64> {
        self.alpha_red
            .ok_or_else(|| Error::Parameter(format!("{} needs alpha_red", method.as_str())))
    }
}

/// How the flat RED solver is run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RedSettings {
    /// Number of CG iterations.
    pub k: usize,
    pub warm_start: bool,
}

impl Default for RedSettings {
    fn default() -> Self {
        Self {
            k: DEFAULT_LAYERS,
            warm_start: false,
        }
    }
}

/// Denoises `y` with `method`.
pub fn apply_method(
    method: Method,
    params: &MethodParams,
    op: GraphOperator<'_>,
    y: &Signal,
    template: &Denoiser,
    red: RedSettings,
) -> Result<Signal> {
    let den = params.denoiser(method, template)?.prepare(op)?;
    if method.is_red() {
        let layer = RedLayer {
            alpha_red: params.alpha_red(method)?,
            denoiser: &den,
        };
        let layers = alloc::vec![layer; red.k + 1];
        Ok(red_cg_solve(y, &layers, RedCgOptions { warm_start: red.warm_start })?.x)
    } else {
        den.denoise(y)
    }
}

/// Mean per-sample RMSE of `method` against the clean signals.
pub fn mean_rmse(
    method: Method,
    params: &MethodParams,
    samples: &[TrainSample<'_>],
    template: &Denoiser,
    red: RedSettings,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Parameter("no samples to evaluate".into()));
    }
    let mut total = 0.0;
    for (i, s) in samples.iter().enumerate() {
        let clean = s
            .clean
            .as_ref()
            .ok_or_else(|| Error::Parameter(format!("sample {i} has no clean signal")))?;
        let x = apply_method(method, params, s.operator, &s.observed, template, red)?;
        total += rmse(&x, clean)?;
    }
    Ok(total / samples.len() as f64)
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0) || !(hi >= lo) || n == 0 {
        return Err(Error::Parameter(format!("invalid log grid [{lo}, {hi}] with {n} points")));
    }
    if n == 1 {
        return Ok(alloc::vec![lo]);
    }
    let (a, b) = (libm::log10(lo), libm::log10(hi));
    Ok((0..n)
        .map(|i| libm::pow(10.0, a + (b - a) * i as f64 / (n - 1) as f64))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub alpha: Vec<f64>,
    pub rho: Vec<f64>,
    pub alpha_red: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            alpha: log_grid(1e-3, 1e3, 20).expect("valid grid"),
            rho: log_grid(1e-2, 1e2, 20).expect("valid grid"),
            alpha_red: log_grid(1e-3, 1e3, 20).expect("valid grid"),
        }
    }
}

impl GridSpec {
    /// Every parameter combination used by `method`, ordered by `alpha`,
    /// then `alpha_red`, then `rho`, each ascending.
    pub fn candidates(&self, method: Method) -> Result<Vec<MethodParams>> {
        let sorted = |v: &[f64]| {
            let mut v = v.to_vec();
            v.sort_by(f64::total_cmp);
            v
        };
        let (alphas, rhos, reds) = (sorted(&self.alpha), sorted(&self.rho), sorted(&self.alpha_red));
        let rho: Vec<Option<f64>> = match method.denoiser_kind() {
            DenoiserKind::Lr => alloc::vec![None],
            DenoiserKind::Pnp => rhos.iter().copied().map(Some).collect(),
        };
        let alpha_red: Vec<Option<f64>> = if method.is_red() {
            reds.iter().copied().map(Some).collect()
        } else {
            alloc::vec![None]
        };
        let mut out = Vec::new();
        for &alpha in &alphas {
            for &ar in &alpha_red {
                for &r in &rho {
                    out.push(MethodParams {
                        alpha,
                        rho: r,
                        alpha_red: ar,
                    });
                }
            }
        }
        if out.is_empty() {
            return Err(Error::Parameter(format!("empty grid for {}", method.as_str())));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub params: MethodParams,
    pub score: f64,
}

/// Picks the lowest finite score. Only a strictly lower score replaces the
/// incumbent, so ties keep the earlier candidate. Failed or non-finite
/// evaluations are skipped.
pub fn select_best(method: Method, candidates: &[MethodParams], scores: Vec<Result<f64>>) -> Result<TuneResult> {
    check_len(candidates.len(), scores.len())?;
    let mut best: Option<TuneResult> = None;
    let mut last_err = None;
    for (p, score) in candidates.iter().zip(scores) {
        match score {
            Ok(s) if s.is_finite() => {
                if best.is_none_or(|b| s < b.score) {
                    best = Some(TuneResult { params: *p, score: s });
                }
            }
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| {
        last_err.unwrap_or_else(|| Error::Numerical(format!("no finite score on the {} grid", method.as_str())))
    })
}

/// Minimizes `score` over the grid, in [`GridSpec::candidates`] order, so
/// ties go to the smaller `alpha`.
pub fn grid_search_by<F>(method: Method, grid: &GridSpec, score: F) -> Result<TuneResult>
where
    F: FnMut(&MethodParams) -> Result<f64>,
{
    let candidates = grid.candidates(method)?;
    let scores = candidates.iter().map(score).collect();
    select_best(method, &candidates, scores)
}

/// Grid search on mean training RMSE.
pub fn grid_search(
    method: Method,
    grid: &GridSpec,
    samples: &[TrainSample<'_>],
    template: &Denoiser,
    red: RedSettings,
) -> Result<TuneResult> {
    grid_search_by(method, grid, |p| mean_rmse(method, p, samples, template, red))
}
