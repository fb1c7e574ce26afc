//! Subcommand implementations.

use std::path::{Path, PathBuf};

use graphred_core::construct::{knn_graph, normalize_weights};
use graphred_core::datagen::{add_noise, fps, SyntheticSpec};
use graphred_core::denoise::{DenoiserKind, GraphOperator};
use graphred_core::filter::{compare_at, compare_responses, lambda_grid, ResponseRow};
use graphred_core::red::{check_homogeneity, check_passivity, RedSolveReport, StopReason};
use graphred_core::rng::{stream, Purpose};
use graphred_core::train::{evaluate_loss, AdamConfig, TrainConfig, TrainMode, TrainSample};
use graphred_core::tune::{select_best, GridSpec, Method, MethodParams, TuneResult};
use graphred_core::{eigendecompose, unrolled_forward, Graph, RedCgOptions, Signal, UnrolledParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundle::{self, sigma_tag, Dataset};
use crate::config::{RunConfig, Split};
use crate::error::{CliError, Result};
use crate::io;
use crate::prepare::{prepare, run_method, sample_rmse, score, PreparedSample};

pub const TUNED_FILE: &str = "tuned.json";
pub const METRICS_FILE: &str = "metrics.json";

/// Settings shared by every subcommand after flags and config are merged.
#[derive(Debug, Clone)]
pub struct Context {
    pub cfg: RunConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub dataset: Option<PathBuf>,
    pub tuned: Option<PathBuf>,
}

impl Context {
    fn dataset_path(&self) -> Result<&Path> {
        self.dataset
            .as_deref()
            .ok_or_else(|| CliError::Config("no dataset given (use --dataset or `dataset` in the config)".into()))
    }

    fn load_dataset(&self) -> Result<Dataset> {
        bundle::load(self.dataset_path()?)
    }

    fn load_tuned(&self) -> Result<Option<Vec<TunedEntry>>> {
        self.tuned.as_deref().map(io::read_json).transpose()
    }

    fn sigmas(&self, ds: &Dataset) -> Result<Vec<f64>> {
        let s: Vec<f64> = ds
            .manifest
            .sigmas
            .iter()
            .copied()
            .filter(|&s| self.cfg.wants_sigma(s))
            .collect();
        if s.is_empty() {
            return Err(CliError::Config("no dataset sigma matches `sigmas`".into()));
        }
        Ok(s)
    }
}

/// Best scalar hyperparameters of one method at one noise level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TunedEntry {
    pub method: Method,
    pub sigma: f64,
    pub alpha_denoiser: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_red: Option<f64>,
    pub train_rmse: f64,
}

impl TunedEntry {
    pub fn params(&self) -> MethodParams {
        MethodParams {
            alpha: self.alpha_denoiser,
            rho: self.rho,
            alpha_red: self.alpha_red,
        }
    }
}

fn find_tuned(tuned: &[TunedEntry], method: Method, sigma: f64) -> Option<&TunedEntry> {
    tuned.iter().find(|e| e.method == method && e.sigma == sigma)
}

fn core_err(e: CliError) -> graphred_core::Error {
    match e {
        CliError::Core(e) => e,
        other => graphred_core::Error::Numerical(other.to_string()),
    }
}

/// Scores every grid candidate in parallel and keeps the best.
fn search<F>(method: Method, grid: &GridSpec, score: F) -> Result<TuneResult>
where
    F: Fn(&MethodParams) -> Result<f64> + Sync,
{
    let candidates = grid.candidates(method)?;
    let scores = candidates.par_iter().map(|p| score(p).map_err(core_err)).collect();
    Ok(select_best(method, &candidates, scores)?)
}

fn require_clean(samples: &[PreparedSample], what: &str) -> Result<()> {
    match samples.iter().find(|s| s.clean.is_none()) {
        Some(s) => Err(CliError::Config(format!("{what} needs clean signals; sample {} has none", s.index))),
        None => Ok(()),
    }
}

fn prepared_split(ds: &Dataset, split: Split, sigma: f64, cfg: &RunConfig) -> Result<Vec<PreparedSample>> {
    let p = prepare(ds, split, sigma, cfg.denoiser.backend)?;
    if p.is_empty() {
        return Err(CliError::Config(format!("dataset has no {split:?} samples").to_lowercase()));
    }
    Ok(p)
}

pub fn generate(ctx: &Context) -> Result<()> {
    let m = bundle::generate(&ctx.cfg, ctx.seed, &ctx.out)?;
    println!(
        "wrote {} samples x {} sigmas to {}",
        m.samples.len(),
        m.sigmas.len(),
        ctx.out.display()
    );
    Ok(())
}

pub fn tune(ctx: &Context) -> Result<Vec<TunedEntry>> {
    let ds = ctx.load_dataset()?;
    let grid = ctx.cfg.grid.spec()?;
    let template = ctx.cfg.denoiser.template();
    let red = ctx.cfg.red;
    let mut entries = Vec::new();
    for sigma in ctx.sigmas(&ds)? {
        let train = prepared_split(&ds, Split::Train, sigma, &ctx.cfg)?;
        require_clean(&train, "tune")?;
        for method in ctx.cfg.methods() {
            let best = search(method, &grid, |p| score(method, p, &train, &template, red))?;
            println!("{:<8} sigma={sigma:<5} train_rmse={:.4}", method.as_str(), best.score);
            entries.push(TunedEntry {
                method,
                sigma,
                alpha_denoiser: best.params.alpha,
                rho: best.params.rho,
                alpha_red: best.params.alpha_red,
                train_rmse: best.score,
            });
        }
    }
    io::write_json(&ctx.out.join(TUNED_FILE), &entries)?;
    Ok(entries)
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub command: String,
    pub split: Split,
    pub seed: u64,
    pub results: Vec<MethodMetrics>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodMetrics {
    pub method: String,
    pub sigma: f64,
    pub mean_rmse: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<serde_json::Value>,
    pub samples: Vec<SampleMetrics>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleMetrics {
    pub index: usize,
    pub rmse: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Vec<Diagnostics>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub channel: usize,
    pub iterations: usize,
    pub stop: StopReason,
    pub gradient_norm: Option<f64>,
    pub objective: Option<f64>,
}

impl Diagnostics {
    fn from_report(channel: usize, r: &RedSolveReport) -> Self {
        Self {
            channel,
            iterations: r.iterations,
            stop: r.stop,
            gradient_norm: r.gradient_norm_history.last().copied(),
            objective: r.objective_history.last().copied(),
        }
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| CliError::Config(e.to_string()))
}

/// What a metrics row denoises with.
enum Estimator<'a> {
    Observed,
    Tuned(Method, MethodParams),
    Trained(&'a str, UnrolledParams),
}

impl Estimator<'_> {
    fn label(&self) -> String {
        match self {
            Estimator::Observed => "observed".into(),
            Estimator::Tuned(m, _) => m.as_str().into(),
            Estimator::Trained(l, _) => (*l).into(),
        }
    }

    fn params(&self) -> Result<Option<serde_json::Value>> {
        match self {
            Estimator::Observed => Ok(None),
            Estimator::Tuned(_, p) => Ok(Some(to_value(p)?)),
            Estimator::Trained(_, p) => Ok(Some(to_value(p)?)),
        }
    }

    fn run(&self, s: &PreparedSample, cfg: &RunConfig) -> Result<(Vec<Signal>, Vec<RedSolveReport>)> {
        let template = cfg.denoiser.template();
        match self {
            Estimator::Observed => Ok((s.observed.clone(), Vec::new())),
            Estimator::Tuned(m, p) => run_method(*m, p, s, &template, cfg.red),
            Estimator::Trained(_, p) => {
                let options = RedCgOptions {
                    warm_start: cfg.red.warm_start,
                };
                let x = s
                    .observed
                    .iter()
                    .map(|y| unrolled_forward(y, p, s.operator(), &template, options))
                    .collect::<graphred_core::Result<Vec<_>>>()?;
                Ok((x, Vec::new()))
            }
        }
    }
}

fn evaluate_estimator(
    est: &Estimator<'_>,
    samples: &[PreparedSample],
    cfg: &RunConfig,
    write_dir: Option<&Path>,
) -> Result<MethodMetrics> {
    let sigma = samples[0].sigma;
    let rows = samples
        .par_iter()
        .map(|s| {
            let (x, reports) = est.run(s, cfg)?;
            let rmse = sample_rmse(&x, s.clean()?)?;
            if let Some(dir) = write_dir {
                let vertex = x.iter().map(|c| s.to_vertex(c)).collect::<Result<Vec<_>>>()?;
                let path = dir
                    .join(format!("{}/sample_{:03}", s.split.as_str(), s.index))
                    .join(format!("denoised_{}.csv", sigma_tag(sigma)));
                io::write_signals(&path, &vertex)?;
            }
            let diagnostics = (cfg.denoise.diagnostics && !reports.is_empty())
                .then(|| reports.iter().enumerate().map(|(c, r)| Diagnostics::from_report(c, r)).collect());
            Ok(SampleMetrics {
                index: s.index,
                rmse,
                diagnostics,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_rmse = rows.iter().map(|r| r.rmse).sum::<f64>() / rows.len() as f64;
    if !mean_rmse.is_finite() {
        return Err(graphred_core::Error::Numerical(format!("{} produced a non-finite RMSE", est.label())).into());
    }
    Ok(MethodMetrics {
        method: est.label(),
        sigma,
        mean_rmse,
        params: est.params()?,
        samples: rows,
    })
}

fn params_file(dir: &Path, sigma: f64) -> PathBuf {
    dir.join(format!("params_{}.json", sigma_tag(sigma)))
}

/// Loads unrolled parameters from a file, or from `params_sigma{σ}.json`
/// inside a directory.
pub fn load_params(path: &Path, sigma: f64) -> Result<UnrolledParams> {
    let file = if path.is_dir() { params_file(path, sigma) } else { path.to_path_buf() };
    let p: UnrolledParams = io::read_json(&file)?;
    p.validate()?;
    Ok(p)
}

fn metrics(ctx: &Context, command: &str, split: Split, write_dir: Option<&Path>, require_tuned: bool) -> Result<MetricsReport> {
    let ds = ctx.load_dataset()?;
    let tuned = ctx.load_tuned()?;
    if require_tuned && tuned.is_none() {
        return Err(CliError::Config("no tuned parameters (use --params or `tuned` in the config)".into()));
    }
    let mut results = Vec::new();
    for sigma in ctx.sigmas(&ds)? {
        let samples = prepared_split(&ds, split, sigma, &ctx.cfg)?;
        require_clean(&samples, command)?;
        let mut estimators = vec![Estimator::Observed];
        if let Some(t) = &tuned {
            for method in ctx.cfg.methods() {
                let e = find_tuned(t, method, sigma).ok_or_else(|| {
                    CliError::Config(format!("no tuned parameters for {} at sigma {sigma}", method.as_str()))
                })?;
                estimators.push(Estimator::Tuned(method, e.params()));
            }
        }
        for run in &ctx.cfg.eval.trained {
            estimators.push(Estimator::Trained(&run.label, load_params(&run.dir, sigma)?));
        }
        for est in &estimators {
            let dir = write_dir.map(|d| d.join(est.label()));
            let m = evaluate_estimator(est, &samples, &ctx.cfg, dir.as_deref())?;
            println!("{:<12} sigma={sigma:<5} rmse={:.4}", m.method, m.mean_rmse);
            results.push(m);
        }
    }
    Ok(MetricsReport {
        command: command.into(),
        split,
        seed: ds.manifest.seed,
        results,
    })
}

pub fn denoise(ctx: &Context) -> Result<MetricsReport> {
    let split = ctx.cfg.denoise.split;
    let report = metrics(ctx, "denoise", split, Some(&ctx.out.join("denoised")), true)?;
    io::write_json(&ctx.out.join(METRICS_FILE), &report)?;
    Ok(report)
}

pub fn eval(ctx: &Context) -> Result<MetricsReport> {
    let split = ctx.cfg.eval.split.unwrap_or(ctx.cfg.denoise.split);
    let report = metrics(ctx, "eval", split, None, false)?;
    io::write_json(&ctx.out.join(METRICS_FILE), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub sigma: f64,
    pub mode: TrainMode,
    pub denoiser: DenoiserKind,
    #[serde(rename = "K")]
    pub k: usize,
    pub trainable_params: usize,
    pub start_epoch: usize,
    pub epochs: usize,
    pub init: String,
    pub initial_loss: f64,
    pub final_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flat_train_rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_rmse: Option<f64>,
}

fn unrolled_rmse(params: &UnrolledParams, samples: &[PreparedSample], ctx: &Context) -> Result<Option<f64>> {
    if samples.iter().any(|s| s.clean.is_none()) {
        return Ok(None);
    }
    let est = Estimator::Trained("", params.clone());
    Ok(Some(evaluate_estimator(&est, samples, &ctx.cfg, None)?.mean_rmse))
}

fn flat_params(k: usize, method: Method, p: &MethodParams) -> Result<UnrolledParams> {
    let alpha_red = p
        .alpha_red
        .ok_or_else(|| CliError::Config(format!("{} needs alpha_red", method.as_str())))?;
    Ok(UnrolledParams::flat(k, method.denoiser_kind(), alpha_red, p.alpha, p.rho)?)
}

pub fn train(ctx: &Context) -> Result<Vec<TrainSummary>> {
    let ds = ctx.load_dataset()?;
    let tuned = ctx.load_tuned()?;
    let t = &ctx.cfg.train;
    let method = match t.denoiser {
        DenoiserKind::Lr => Method::RedLr,
        DenoiserKind::Pnp => Method::RedPnp,
    };
    let supervised = t.mode == TrainMode::Supervised;
    let template = ctx.cfg.denoiser.template();
    let grid = ctx.cfg.grid.spec()?;
    let tcfg = TrainConfig {
        mode: t.mode,
        epochs: t.epochs,
        start_epoch: t.start_epoch,
        n2n_fraction: t.n2n_fraction,
        seed: ctx.seed,
        gradient_method: t.gradient_method,
        fd_step: t.fd_step,
        adam: AdamConfig {
            learning_rate: t.learning_rate,
            ..AdamConfig::default()
        },
        warm_start: ctx.cfg.red.warm_start,
    };
    tcfg.validate()?;

    let mut summaries = Vec::new();
    for sigma in ctx.sigmas(&ds)? {
        let prepared = prepared_split(&ds, Split::Train, sigma, &ctx.cfg)?;
        if supervised {
            require_clean(&prepared, "supervised training")?;
        }
        let samples: Vec<TrainSample<'_>> = prepared.iter().flat_map(|p| p.train_samples(supervised)).collect();

        let (init, source) = if let Some(path) = &t.init_params {
            (load_params(path, sigma)?, path.display().to_string())
        } else if let Some(e) = tuned.as_deref().and_then(|v| find_tuned(v, method, sigma)).filter(|_| supervised) {
            (flat_params(t.k, method, &e.params())?, "tuned".to_string())
        } else if supervised {
            let best = search(method, &grid, |p| score(method, p, &prepared, &template, ctx.cfg.red))?;
            (flat_params(t.k, method, &best.params)?, "grid".to_string())
        } else {
            let best = search(method, &grid, |p| {
                let flat = flat_params(t.k, method, p)?;
                Ok(evaluate_loss(&samples, &flat, &template, &tcfg, t.start_epoch)?)
            })?;
            (flat_params(t.k, method, &best.params)?, "n2n-grid".to_string())
        };
        if init.denoiser_kind != t.denoiser {
            return Err(CliError::Config(format!(
                "initial parameters use {} but train.denoiser is {}",
                init.denoiser_kind.as_str(),
                t.denoiser.as_str()
            )));
        }

        let outcome = graphred_core::train(&samples, &init, &template, &tcfg)?;
        io::write_json(&params_file(&ctx.out, sigma), &outcome.params)?;
        let end = t.start_epoch + t.epochs;
        let rows = outcome
            .loss_history
            .iter()
            .enumerate()
            .map(|(i, &l)| vec![(t.start_epoch + i) as f64, l])
            .chain(std::iter::once(vec![end as f64, outcome.final_loss]));
        io::write_rows(
            &ctx.out.join(format!("loss_{}.csv", sigma_tag(sigma))),
            Some(&["epoch", "loss"]),
            rows,
        )?;
        let summary = TrainSummary {
            sigma,
            mode: t.mode,
            denoiser: t.denoiser,
            k: outcome.params.k,
            trainable_params: outcome.params.trainable_count(),
            start_epoch: t.start_epoch,
            epochs: t.epochs,
            init: source,
            initial_loss: outcome.loss_history.first().copied().unwrap_or(outcome.final_loss),
            final_loss: outcome.final_loss,
            flat_train_rmse: unrolled_rmse(&init, &prepared, ctx)?,
            train_rmse: unrolled_rmse(&outcome.params, &prepared, ctx)?,
        };
        println!(
            "sigma={sigma:<5} loss {:.4} -> {:.4}",
            summary.initial_loss, summary.final_loss
        );
        summaries.push(summary);
    }
    io::write_json(&ctx.out.join("train_summary.json"), &summaries)?;
    Ok(summaries)
}

/// A graph to run condition checks on, with the data signals that live on it.
struct CheckGraph {
    label: String,
    graph: Graph,
    data: Vec<Signal>,
    data_kind: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckRow {
    pub graph: String,
    pub denoiser: DenoiserKind,
    pub probe: String,
    pub count: usize,
    pub max_homogeneity_deviation: f64,
    pub max_passivity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckSummary {
    pub denoiser: DenoiserKind,
    pub max_homogeneity_deviation: f64,
    pub max_passivity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub scale: f64,
    pub alpha: f64,
    pub rho: f64,
    pub pnp_iters: usize,
    pub summary: Vec<CheckSummary>,
    pub rows: Vec<CheckRow>,
}

fn dataset_check_graphs(root: &Path, limit: Option<usize>) -> Result<Vec<CheckGraph>> {
    let ds = bundle::load(root)?;
    let n = limit.unwrap_or(usize::MAX);
    Ok(ds
        .samples
        .into_iter()
        .zip(&ds.manifest.samples)
        .take(n)
        .map(|(s, e)| CheckGraph {
            label: format!("{}/{}", root.display(), e.dir),
            data: s.observed.into_iter().flat_map(|o| o.channels).collect(),
            graph: s.graph,
            data_kind: "observed",
        })
        .collect())
}

/// Loads a point cloud, thins it with FPS and builds its normalized kNN graph.
pub fn point_cloud_graph(path: &Path, cfg: &RunConfig) -> Result<(graphred_core::PointSet, Graph)> {
    let pc = &cfg.point_cloud;
    let cloud = io::load_point_cloud(path, pc.format)?;
    let m = pc.max_points.min(cloud.len());
    let points = cloud.select(&fps(&cloud, m, pc.fps_start)?)?;
    let graph = normalize_weights(&knn_graph(&points, pc.k)?)?;
    Ok((points, graph))
}

/// Dataset bundles from `check.datasets` (or `--dataset`), else the
/// synthetic graphs of `[data]`; then any `check.point_clouds`.
fn check_graphs(ctx: &Context) -> Result<Vec<CheckGraph>> {
    let c = &ctx.cfg.check;
    let mut graphs = Vec::new();
    let datasets: Vec<&Path> = if c.datasets.is_empty() {
        ctx.dataset.as_deref().into_iter().collect()
    } else {
        c.datasets.iter().map(PathBuf::as_path).collect()
    };
    for d in &datasets {
        graphs.extend(dataset_check_graphs(d, c.max_samples)?);
    }
    if datasets.is_empty() {
        let spec = SyntheticSpec {
            seed: ctx.seed,
            ..ctx.cfg.data.clone()
        };
        let n = c.max_samples.unwrap_or(usize::MAX).min(spec.sample_count());
        for i in 0..n {
            let s = spec.sample(i)?;
            let data = spec
                .sigmas
                .iter()
                .map(|&sigma| spec.observe(i, &s.clean, sigma))
                .collect::<graphred_core::Result<Vec<_>>>()?;
            graphs.push(CheckGraph {
                label: format!("synthetic/sample_{i:03}"),
                graph: s.graph,
                data,
                data_kind: "observed",
            });
        }
    }
    for p in &c.point_clouds {
        let (points, graph) = point_cloud_graph(p, &ctx.cfg)?;
        graphs.push(CheckGraph {
            label: p.display().to_string(),
            data: points.coords().column_iter().map(|c| c.into_owned()).collect(),
            graph,
            data_kind: "coordinates",
        });
    }
    Ok(graphs)
}

fn check_graph(idx: usize, g: &CheckGraph, ctx: &Context) -> Result<Vec<CheckRow>> {
    let c = &ctx.cfg.check;
    let lap = g.graph.laplacian();
    let n = g.graph.n_nodes();
    let mut rng = stream(ctx.seed, idx as u32, Purpose::Probe);
    let zero = Signal::zeros(n);
    let random = (0..c.probes)
        .map(|_| add_noise(&zero, 1.0, &mut rng))
        .collect::<graphred_core::Result<Vec<_>>>()?;
    let probes: [(&str, Vec<Signal>); 3] = [
        ("random", random),
        (g.data_kind, g.data.clone()),
        ("all-ones", vec![Signal::from_element(n, 1.0)]),
    ];
    let template = ctx.cfg.denoiser.template();
    let mut rows = Vec::new();
    for kind in [DenoiserKind::Lr, DenoiserKind::Pnp] {
        let mut d = template.with_alpha(c.alpha).with_rho(c.rho);
        d.kind = kind;
        let den = d.prepare(GraphOperator::Vertex(&lap))?;
        for (name, signals) in &probes {
            if signals.is_empty() {
                continue;
            }
            let (mut h, mut p) = (0.0f64, 0.0f64);
            for x in signals {
                h = h.max(check_homogeneity(&den, x, c.scale)?);
                p = p.max(check_passivity(&den, x)?);
            }
            rows.push(CheckRow {
                graph: g.label.clone(),
                denoiser: kind,
                probe: (*name).into(),
                count: signals.len(),
                max_homogeneity_deviation: h,
                max_passivity: p,
            });
        }
    }
    Ok(rows)
}

pub fn check(ctx: &Context) -> Result<CheckReport> {
    let c = &ctx.cfg.check;
    if !(c.scale > 0.0) || !(c.alpha > 0.0) || !(c.rho > 0.0) {
        return Err(CliError::Config("check.scale, check.alpha and check.rho must be positive".into()));
    }
    let graphs = check_graphs(ctx)?;
    let rows: Vec<CheckRow> = graphs
        .par_iter()
        .enumerate()
        .map(|(i, g)| check_graph(i, g, ctx))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let summary = [DenoiserKind::Lr, DenoiserKind::Pnp]
        .into_iter()
        .map(|kind| {
            let of = rows.iter().filter(|r| r.denoiser == kind);
            CheckSummary {
                denoiser: kind,
                max_homogeneity_deviation: of.clone().map(|r| r.max_homogeneity_deviation).fold(0.0, f64::max),
                max_passivity: of.map(|r| r.max_passivity).fold(0.0, f64::max),
            }
        })
        .collect::<Vec<_>>();
    for s in &summary {
        println!(
            "{:<4} max homogeneity deviation {:.3e}, max passivity {:.9}",
            s.denoiser.as_str(),
            s.max_homogeneity_deviation,
            s.max_passivity
        );
    }
    let report = CheckReport {
        scale: c.scale,
        alpha: c.alpha,
        rho: c.rho,
        pnp_iters: ctx.cfg.denoiser.pnp_iters,
        summary,
        rows,
    };
    io::write_json(&ctx.out.join("check.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumMeta {
    pub source: String,
    pub n_nodes: usize,
    pub lambda_max: f64,
    pub alpha_red: f64,
    pub alpha_lr: f64,
    pub alpha_source: String,
    pub rows: usize,
}

pub fn spectrum(ctx: &Context) -> Result<(SpectrumMeta, Vec<ResponseRow>)> {
    let sc = &ctx.cfg.spectrum;
    let (source, graph) = if let Some(p) = &sc.point_cloud {
        (p.display().to_string(), point_cloud_graph(p, &ctx.cfg)?.1)
    } else if let Some(root) = &ctx.dataset {
        let ds = bundle::load(root)?;
        let (s, e) = ds
            .samples
            .into_iter()
            .zip(&ds.manifest.samples)
            .find(|(s, _)| s.index == sc.sample)
            .ok_or_else(|| CliError::Config(format!("dataset has no sample {}", sc.sample)))?;
        (format!("{}/{}", root.display(), e.dir), s.graph)
    } else {
        let spec = SyntheticSpec {
            seed: ctx.seed,
            ..ctx.cfg.data.clone()
        };
        (format!("synthetic/sample_{:03}", sc.sample), spec.sample(sc.sample)?.graph)
    };

    let tuned = ctx.load_tuned()?;
    let entry = tuned.as_deref().and_then(|t| {
        t.iter()
            .find(|e| e.method == Method::RedLr && sc.sigma.is_none_or(|s| s == e.sigma))
    });
    let alpha_source = match (sc.alpha_red.zip(sc.alpha_lr), entry) {
        (Some(_), _) => "config".to_string(),
        (None, Some(e)) => format!("tuned red-lr at sigma {}", e.sigma),
        (None, None) => "default".to_string(),
    };
    let alpha_red = sc.alpha_red.or(entry.and_then(|e| e.alpha_red)).unwrap_or(1.0);
    let alpha_lr = sc.alpha_lr.or(entry.map(|e| e.alpha_denoiser)).unwrap_or(1.0);

    let decomp = eigendecompose(&graph.laplacian())?;
    let lambda_max = decomp.eigenvalues().max();
    let rows = match sc.grid_points {
        Some(n) => compare_at(&lambda_grid(lambda_max, n)?, alpha_red, alpha_lr)?,
        None => compare_responses(&decomp, alpha_red, alpha_lr)?,
    };
    io::write_rows(
        &ctx.out.join("spectrum.csv"),
        Some(&["lambda", "h_lr", "h_red"]),
        rows.iter().map(|r| vec![r.lambda, r.h_lr, r.h_red]),
    )?;
    let meta = SpectrumMeta {
        source,
        n_nodes: graph.n_nodes(),
        lambda_max,
        alpha_red,
        alpha_lr,
        alpha_source,
        rows: rows.len(),
    };
    io::write_json(&ctx.out.join("spectrum.json"), &meta)?;
    println!(
        "{} eigenvalues up to {lambda_max:.4}; alpha_red={alpha_red}, alpha_lr={alpha_lr}",
        rows.len()
    );
    Ok((meta, rows))
}

/// Runs `f` on a pool with `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

