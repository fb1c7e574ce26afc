//! Per-(sample, σ) operators and signals, ready for the solvers.

use graphred_core::datagen::Split as SampleSplit;
use graphred_core::denoise::{Denoiser, GraphOperator};
use graphred_core::graph::Laplacian;
use graphred_core::red::{red_cg_solve, RedCgOptions, RedLayer, RedSolveReport};
use graphred_core::spectral::{eigendecompose, SpectralDecomp};
use graphred_core::train::TrainSample;
use graphred_core::tune::{Method, MethodParams, RedSettings};
use graphred_core::{mse, GraphDenoiser, Signal};
use rayon::prelude::*;

use crate::bundle::{Dataset, Observation, SampleData};
use crate::config::{Backend, Split};
use crate::error::{CliError, Result};

pub struct PreparedSample {
    pub split: SampleSplit,
    pub index: usize,
    pub sigma: f64,
    lap: Laplacian,
    decomp: Option<SpectralDecomp>,
    eigenvalues: Vec<f64>,
    /// Observed channels in the backend's domain.
    pub observed: Vec<Signal>,
    /// Clean channels in the backend's domain.
    pub clean: Option<Vec<Signal>>,
    /// Vertex-domain `max|y|` per channel.
    pub n2n_scales: Vec<f64>,
}

impl PreparedSample {
    pub fn new(sample: &SampleData, obs: &Observation, backend: Backend) -> Result<Self> {
        let graph = obs.graph.as_ref().unwrap_or(&sample.graph);
        let lap = graph.laplacian();
        let decomp = match backend {
            Backend::Spectral => Some(eigendecompose(&lap)?),
            Backend::Vertex => None,
        };
        let eigenvalues = decomp
            .as_ref()
            .map_or_else(Vec::new, |d| d.eigenvalues().as_slice().to_vec());
        let to_backend = |x: &Signal| -> Result<Signal> {
            match &decomp {
                Some(d) => Ok(d.gft(x)?),
                None => Ok(x.clone()),
            }
        };
        let observed = obs.channels.iter().map(to_backend).collect::<Result<Vec<_>>>()?;
        let clean = match &sample.clean {
            Some(c) => Some(c.iter().map(to_backend).collect::<Result<Vec<_>>>()?),
            None => None,
        };
        Ok(Self {
            split: sample.split,
            index: sample.index,
            sigma: obs.sigma,
            n2n_scales: obs.channels.iter().map(|c| c.amax()).collect(),
            lap,
            decomp,
            eigenvalues,
            observed,
            clean,
        })
    }

    pub fn operator(&self) -> GraphOperator<'_> {
        match &self.decomp {
            Some(_) => GraphOperator::Spectral(&self.eigenvalues),
            None => GraphOperator::Vertex(&self.lap),
        }
    }

    pub fn to_vertex(&self, x: &Signal) -> Result<Signal> {
        match &self.decomp {
            Some(d) => Ok(d.igft(x)?),
            None => Ok(x.clone()),
        }
    }

    pub fn clean(&self) -> Result<&[Signal]> {
        self.clean
            .as_deref()
            .ok_or_else(|| CliError::Config(format!("sample {} has no clean signal", self.index)))
    }

    /// One training sample per channel.
    pub fn train_samples(&self, with_clean: bool) -> Vec<TrainSample<'_>> {
        self.observed
            .iter()
            .enumerate()
            .map(|(c, y)| {
                let clean = if with_clean {
                    self.clean.as_ref().map(|x| x[c].clone())
                } else {
                    None
                };
                TrainSample::new(self.operator(), y.clone(), clean).with_n2n_scale(self.n2n_scales[c])
            })
            .collect()
    }
}

pub fn in_split(split: Split, s: SampleSplit) -> bool {
    match split {
        Split::All => true,
        Split::Train => s == SampleSplit::Train,
        Split::Test => s == SampleSplit::Test,
    }
}

/// Prepares every sample of `split` at `sigma`, in manifest order.
pub fn prepare(ds: &Dataset, split: Split, sigma: f64, backend: Backend) -> Result<Vec<PreparedSample>> {
    ds.samples
        .par_iter()
        .filter(|s| in_split(split, s.split))
        .map(|s| {
            let obs = s.observation(sigma).ok_or_else(|| {
                CliError::Config(format!("dataset has no observation at sigma {sigma}"))
            })?;
            PreparedSample::new(s, obs, backend)
        })
        .collect()
}

/// RMSE over every entry of every channel.
pub fn sample_rmse(estimate: &[Signal], clean: &[Signal]) -> Result<f64> {
    if estimate.len() != clean.len() || estimate.is_empty() {
        return Err(CliError::Config("channel count mismatch".into()));
    }
    let mut total = 0.0;
    for (e, c) in estimate.iter().zip(clean) {
        total += mse(e, c)?;
    }
    Ok((total / estimate.len() as f64).sqrt())
}

/// Runs `method` on every channel, keeping RED solve reports.
pub fn run_method(
    method: Method,
    params: &MethodParams,
    sample: &PreparedSample,
    template: &Denoiser,
    red: RedSettings,
) -> Result<(Vec<Signal>, Vec<RedSolveReport>)> {
    let den = params.denoiser(method, template)?.prepare(sample.operator())?;
    let mut out = Vec::with_capacity(sample.observed.len());
    let mut reports = Vec::new();
    for y in &sample.observed {
        if method.is_red() {
            let alpha_red = params
                .alpha_red
                .ok_or_else(|| CliError::Config(format!("{} needs alpha_red", method.as_str())))?;
            let layers = vec![RedLayer { alpha_red, denoiser: &den }; red.k + 1];
            let report = red_cg_solve(y, &layers, RedCgOptions { warm_start: red.warm_start })?;
            out.push(report.x.clone());
            reports.push(report);
        } else {
            out.push(den.denoise(y)?);
        }
    }
    Ok((out, reports))
}

/// Mean per-sample RMSE of `method` against the clean signals.
pub fn score(
    method: Method,
    params: &MethodParams,
    samples: &[PreparedSample],
    template: &Denoiser,
    red: RedSettings,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(CliError::Config("no samples to score".into()));
    }
    let mut total = 0.0;
    for s in samples {
        let (x, _) = run_method(method, params, s, template, red)?;
        total += sample_rmse(&x, s.clean()?)?;
    }
    Ok(total / samples.len() as f64)
}
