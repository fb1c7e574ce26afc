//! Dataset bundles: one directory per split, one per sample, and a
//! manifest recording how everything was generated.
//!
//! ```text
//! manifest.json
//! train/sample_000/graph.edges
//! train/sample_000/points.csv
//! train/sample_000/clean.csv
//! train/sample_000/observed_sigma10.csv
//! train/sample_000/graph_sigma10.edges    (point clouds, observed graphs)
//! test/sample_010/...
//! ```

use std::path::{Path, PathBuf};

use graphred_core::construct::{knn_graph, normalize_weights};
use graphred_core::datagen::{add_noise, fps, Split, SyntheticSpec};
use graphred_core::rng::{stream, Purpose};
use graphred_core::{Graph, PointSet, Signal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DataSource, GraphSource, PointCloudConfig, RunConfig};
use crate::error::{CliError, Result};
use crate::io;

pub const MANIFEST: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub source: DataSource,
    pub seed: u64,
    pub sigmas: Vec<f64>,
    pub channels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point_cloud: Option<PointCloudConfig>,
    pub samples: Vec<SampleEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleEntry {
    pub split: Split,
    pub index: usize,
    pub dir: String,
    pub n_nodes: usize,
}

/// One sample as stored on disk.
#[derive(Debug, Clone)]
pub struct SampleData {
    pub split: Split,
    pub index: usize,
    pub points: Option<PointSet>,
    pub graph: Graph,
    pub clean: Option<Vec<Signal>>,
    pub observed: Vec<Observation>,
}

#[derive(Debug, Clone)]
pub struct Observation {
    pub sigma: f64,
    pub channels: Vec<Signal>,
    /// Graph built from this observation, when the bundle has one.
    pub graph: Option<Graph>,
}

impl SampleData {
    pub fn observation(&self, sigma: f64) -> Option<&Observation> {
        self.observed.iter().find(|o| o.sigma == sigma)
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub samples: Vec<SampleData>,
}

pub fn sigma_tag(sigma: f64) -> String {
    format!("sigma{sigma}")
}

fn sample_dir(split: Split, index: usize) -> String {
    format!("{}/sample_{index:03}", split.as_str())
}

fn channels_of(points: &PointSet) -> Vec<Signal> {
    points.coords().column_iter().map(|c| c.into_owned()).collect()
}

fn points_from_channels(channels: &[Signal]) -> Result<PointSet> {
    let n = channels.first().map_or(0, |c| c.len());
    let rows: Vec<Vec<f64>> = (0..n).map(|i| channels.iter().map(|c| c[i]).collect()).collect();
    Ok(PointSet::from_rows(&rows)?)
}

fn write_sample(root: &Path, s: &SampleData) -> Result<()> {
    let dir = root.join(sample_dir(s.split, s.index));
    io::write_edges(&dir.join("graph.edges"), &s.graph)?;
    if let Some(p) = &s.points {
        io::write_points(&dir.join("points.csv"), p)?;
    }
    if let Some(c) = &s.clean {
        io::write_signals(&dir.join("clean.csv"), c)?;
    }
    for o in &s.observed {
        let tag = sigma_tag(o.sigma);
        io::write_signals(&dir.join(format!("observed_{tag}.csv")), &o.channels)?;
        if let Some(g) = &o.graph {
            io::write_edges(&dir.join(format!("graph_{tag}.edges")), g)?;
        }
    }
    Ok(())
}

fn synthetic_samples(spec: &SyntheticSpec) -> Result<Vec<SampleData>> {
    (0..spec.sample_count())
        .into_par_iter()
        .map(|i| {
            let s = spec.sample(i)?;
            let observed = spec
                .sigmas
                .iter()
                .map(|&sigma| {
                    Ok(Observation {
                        sigma,
                        channels: vec![spec.observe(i, &s.clean, sigma)?],
                        graph: None,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SampleData {
                split: s.split,
                index: i,
                points: Some(s.points),
                graph: s.graph,
                clean: Some(vec![s.clean]),
                observed,
            })
        })
        .collect()
}

fn point_cloud_samples(pc: &PointCloudConfig, sigmas: &[f64], seed: u64) -> Result<Vec<SampleData>> {
    pc.paths
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let cloud = io::load_point_cloud(path, pc.format)?;
            let m = pc.max_points.min(cloud.len());
            let points = cloud.select(&fps(&cloud, m, pc.fps_start)?)?;
            let graph = normalize_weights(&knn_graph(&points, pc.k)?)?;
            let clean = channels_of(&points);
            let observed = sigmas
                .iter()
                .map(|&sigma| {
                    let mut rng = stream(seed, i as u32, Purpose::noise(sigma));
                    let channels = clean
                        .iter()
                        .map(|c| add_noise(c, sigma, &mut rng))
                        .collect::<graphred_core::Result<Vec<_>>>()?;
                    let graph = match pc.graph {
                        GraphSource::Observed => {
                            let noisy = points_from_channels(&channels)?;
                            Some(normalize_weights(&knn_graph(&noisy, pc.k)?)?)
                        }
                        GraphSource::Clean => None,
                    };
                    Ok(Observation { sigma, channels, graph })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SampleData {
                split: if i < pc.n_train { Split::Train } else { Split::Test },
                index: i,
                points: Some(points),
                graph,
                clean: Some(clean),
                observed,
            })
        })
        .collect()
}

/// Generates the bundle described by `cfg` (with `seed` applied) under `root`.
pub fn generate(cfg: &RunConfig, seed: u64, root: &Path) -> Result<Manifest> {
    let spec = SyntheticSpec {
        seed,
        ..cfg.data.clone()
    };
    let (samples, synthetic, point_cloud, channels) = match cfg.source {
        DataSource::Synthetic => (synthetic_samples(&spec)?, Some(spec.clone()), None, 1),
        DataSource::PointCloud => {
            let s = point_cloud_samples(&cfg.point_cloud, &spec.sigmas, seed)?;
            let ch = s.first().and_then(|s| s.clean.as_ref()).map_or(0, Vec::len);
            (s, None, Some(cfg.point_cloud.clone()), ch)
        }
    };
    for s in &samples {
        write_sample(root, s)?;
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        source: cfg.source,
        seed,
        sigmas: spec.sigmas.clone(),
        channels,
        synthetic,
        point_cloud,
        samples: samples
            .iter()
            .map(|s| SampleEntry {
                split: s.split,
                index: s.index,
                dir: sample_dir(s.split, s.index),
                n_nodes: s.graph.n_nodes(),
            })
            .collect(),
    };
    io::write_json(&root.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

fn check_lengths(path: &Path, n: usize, channels: &[Signal]) -> Result<()> {
    match channels.iter().find(|c| c.len() != n) {
        Some(c) => Err(CliError::parse(path, 0, format!("expected {n} rows, got {}", c.len()))),
        None => Ok(()),
    }
}

/// Loads a bundle. `clean.csv` may be absent (unsupervised use).
pub fn load(root: &Path) -> Result<Dataset> {
    let manifest: Manifest = io::read_json(&root.join(MANIFEST))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(CliError::Config(format!(
            "unsupported bundle format {} (expected {FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    let samples = manifest
        .samples
        .iter()
        .map(|e| {
            let dir = root.join(&e.dir);
            let graph = io::read_edges(&dir.join("graph.edges"))?;
            let n = graph.n_nodes();
            let points_path = dir.join("points.csv");
            let points = if points_path.exists() {
                Some(io::read_points_csv(&points_path)?)
            } else {
                None
            };
            let clean_path = dir.join("clean.csv");
            let clean = if clean_path.exists() {
                let c = io::read_signals(&clean_path)?;
                check_lengths(&clean_path, n, &c)?;
                Some(c)
            } else {
                None
            };
            let observed = manifest
                .sigmas
                .iter()
                .map(|&sigma| {
                    let tag = sigma_tag(sigma);
                    let p = dir.join(format!("observed_{tag}.csv"));
                    let channels = io::read_signals(&p)?;
                    check_lengths(&p, n, &channels)?;
                    let gp = dir.join(format!("graph_{tag}.edges"));
                    let graph = if gp.exists() { Some(io::read_edges(&gp)?) } else { None };
                    Ok(Observation { sigma, channels, graph })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SampleData {
                split: e.split,
                index: e.index,
                points,
                graph,
                clean,
                observed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        root: root.to_path_buf(),
        manifest,
        samples,
    })
}
