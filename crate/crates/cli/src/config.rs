//! TOML run configuration. Every table is optional and unknown keys are
//! rejected.

use std::path::{Path, PathBuf};

use graphred_core::datagen::SyntheticSpec;
use graphred_core::denoise::{Denoiser, DenoiserKind, LrSolve, XUpdate, DEFAULT_PNP_ITERS};
use graphred_core::train::{GradientMethod, TrainMode};
use graphred_core::tune::{log_grid, GridSpec, Method, RedSettings};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io::PointFormat;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    /// Dataset bundle read by `tune`, `denoise`, `train`, `check`,
    /// `spectrum` and `eval`.
    pub dataset: Option<PathBuf>,
    /// Tuned scalar parameters written by `tune`.
    pub tuned: Option<PathBuf>,
    /// What `generate` builds.
    pub source: DataSource,
    pub data: SyntheticSpec,
    pub point_cloud: PointCloudConfig,
    pub denoiser: DenoiserConfig,
    pub red: RedSettings,
    pub grid: GridConfig,
    pub methods: Vec<Method>,
    /// Restricts commands to these noise levels; empty means all.
    pub sigmas: Vec<f64>,
    pub denoise: DenoiseConfig,
    pub train: TrainSettings,
    pub check: CheckConfig,
    pub spectrum: SpectrumConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    #[default]
    Synthetic,
    PointCloud,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphSource {
    /// Built from the observed (noisy) coordinates of each noise level.
    Observed,
    /// Built from the clean coordinates.
    Clean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PointCloudConfig {
    pub paths: Vec<PathBuf>,
    pub format: Option<PointFormat>,
    /// Farthest point sampling target; clouds with fewer points are kept whole.
    pub max_points: usize,
    pub fps_start: usize,
    pub k: usize,
    pub graph: GraphSource,
    /// The first `n_train` clouds form the training split.
    pub n_train: usize,
}

impl Default for PointCloudConfig {
    fn default() -> Self {
        Self {
            paths: Vec::new(),
            format: None,
            max_points: 500,
            fps_start: 0,
            k: 5,
            graph: GraphSource::Observed,
            n_train: 0,
        }
    }
}

/// Where denoisers run: on GFT coefficients (LR becomes a diagonal
/// filter) or on vertex values with a linear solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Spectral,
    Vertex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenoiserConfig {
    pub backend: Backend,
    pub pnp_iters: usize,
    pub x_update: XUpdate,
    pub lr_solve: LrSolve,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        let d = Denoiser::lr(1.0);
        Self {
            backend: Backend::Spectral,
            pnp_iters: DEFAULT_PNP_ITERS,
            x_update: XUpdate::Observation,
            lr_solve: d.lr_solve,
            cg_tol: d.cg_tol,
            cg_max_iters: d.cg_max_iters,
        }
    }
}

impl DenoiserConfig {
    pub fn template(&self) -> Denoiser {
        Denoiser::lr(1.0)
            .with_pnp_iters(self.pnp_iters)
            .with_x_update(self.x_update)
            .with_lr_solve(self.lr_solve)
            .with_cg(self.cg_tol, self.cg_max_iters)
    }
}

/// A log-spaced range or an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridAxis {
    Log { min: f64, max: f64, points: usize },
    List(Vec<f64>),
}

impl GridAxis {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            GridAxis::Log { min, max, points } => Ok(log_grid(*min, *max, *points)?),
            GridAxis::List(v) => Ok(v.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub alpha: GridAxis,
    pub rho: GridAxis,
    pub alpha_red: GridAxis,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            alpha: GridAxis::Log {
                min: 1e-3,
                max: 1e3,
                points: 20,
            },
            rho: GridAxis::Log {
                min: 1e-2,
                max: 1e2,
                points: 20,
            },
            alpha_red: GridAxis::Log {
                min: 1e-3,
                max: 1e3,
                points: 20,
            },
        }
    }
}

impl GridConfig {
    pub fn spec(&self) -> Result<GridSpec> {
        Ok(GridSpec {
            alpha: self.alpha.values()?,
            rho: self.rho.values()?,
            alpha_red: self.alpha_red.values()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenoiseConfig {
    pub split: Split,
    /// Also write the solver report (histories) per sample.
    pub diagnostics: bool,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            split: Split::Test,
            diagnostics: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub mode: TrainMode,
    pub denoiser: DenoiserKind,
    #[serde(rename = "K")]
    pub k: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub gradient_method: GradientMethod,
    pub fd_step: f64,
    pub n2n_fraction: f64,
    /// Resume from these parameters instead of grid-tuned flat ones.
    pub init_params: Option<PathBuf>,
    pub start_epoch: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let t = graphred_core::train::TrainConfig::default();
        Self {
            mode: t.mode,
            denoiser: DenoiserKind::Lr,
            k: graphred_core::unroll::DEFAULT_LAYERS,
            epochs: t.epochs,
            learning_rate: t.adam.learning_rate,
            gradient_method: t.gradient_method,
            fd_step: t.fd_step,
            n2n_fraction: t.n2n_fraction,
            init_params: None,
            start_epoch: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    pub probes: usize,
    pub scale: f64,
    pub alpha: f64,
    pub rho: f64,
    /// Extra bundles to check besides `dataset`.
    pub datasets: Vec<PathBuf>,
    /// Point clouds checked on their own kNN graphs.
    pub point_clouds: Vec<PathBuf>,
    pub max_samples: Option<usize>,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            probes: 100,
            scale: 1.1,
            alpha: 1.0,
            rho: 1.0,
            datasets: Vec::new(),
            point_clouds: Vec::new(),
            max_samples: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub sample: usize,
    /// Takes the RED(LR) parameters tuned at this σ when the α values are
    /// not given.
    pub sigma: Option<f64>,
    pub alpha_red: Option<f64>,
    pub alpha_lr: Option<f64>,
    /// Evaluate on an evenly spaced λ grid instead of the graph spectrum.
    pub grid_points: Option<usize>,
    pub point_cloud: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub split: Option<Split>,
    /// Directories written by `train`, evaluated under their label.
    pub trained: Vec<TrainedRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainedRun {
    pub label: String,
    pub dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::io::read_text(path)?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.denoiser.template().validate()?;
        self.grid.spec()?;
        if self.red.k == 0 {
            return Err(CliError::Config("red.k must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(CliError::Config("threads must be at least 1".into()));
        }
        if self.source == DataSource::PointCloud && self.point_cloud.paths.is_empty() {
            return Err(CliError::Config("point_cloud.paths is empty".into()));
        }
        if self.train.k == 0 || !(self.train.learning_rate > 0.0) {
            return Err(CliError::Config("train.K and train.learning_rate must be positive".into()));
        }
        Ok(())
    }

    pub fn methods(&self) -> Vec<Method> {
        if self.methods.is_empty() {
            Method::ALL.to_vec()
        } else {
            self.methods.clone()
        }
    }

    pub fn wants_sigma(&self, sigma: f64) -> bool {
        self.sigmas.is_empty() || self.sigmas.contains(&sigma)
    }
}
