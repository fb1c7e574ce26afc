//! Synthetic bandlimited signals on random sensor graphs, noise, and
//! farthest point sampling.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::construct::{knn_graph, normalize_weights, PointSet};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::{stream, Purpose};
use crate::spectral::{eigendecompose, SpectralDecomp};
use crate::Signal;

/// `n` i.i.d. uniform points in `[0, side]²`.
pub fn generate_sensor_points<R: Rng + ?Sized>(n: usize, side: f64, rng: &mut R) -> Result<PointSet> {
    if !(side > 0.0) {
        return Err(Error::Parameter(format!("side must be positive, got {side}")));
    }
    let coords = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>() * side);
    PointSet::new(coords)
}

/// `d_k = sin(kπ/N_band) + C` for `k = 1..=N_band`.
pub fn bandlimited_coefficients(n_band: usize, offset: f64) -> Vec<f64> {
    (1..=n_band)
        .map(|k| libm::sin(k as f64 * core::f64::consts::PI / n_band as f64) + offset)
        .collect()
}

/// `x* = U_{N_band} d`, the first `N_band` eigenvectors weighted by
/// [`bandlimited_coefficients`].
pub fn generate_bandlimited(decomp: &SpectralDecomp, n_band: usize, offset: f64) -> Result<Signal> {
    let n = decomp.n_nodes();
    if n_band == 0 || n_band > n {
        return Err(Error::Parameter(format!("n_band must be in 1..={n}, got {n_band}")));
    }
    let d = Signal::from_vec(bandlimited_coefficients(n_band, offset));
    Ok(decomp.basis().columns(0, n_band) * d)
}

/// `y = x + n` with `n ~ N(0, σ²I)`.
pub fn add_noise<R: Rng + ?Sized>(x: &Signal, sigma: f64, rng: &mut R) -> Result<Signal> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Parameter(format!("sigma must be nonnegative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(x.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Parameter(format!("{e}")))?;
    Ok(x.map(|v| v + normal.sample(rng)))
}

/// Farthest point sampling. Returns `m` indices in selection order,
/// starting at `start`. Ties go to the lower index.
pub fn fps(points: &PointSet, m: usize, start: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if m == 0 || m > n {
        return Err(Error::Parameter(format!("m must be in 1..={n}, got {m}")));
    }
    if start >= n {
        return Err(Error::Parameter(format!("start index {start} out of range")));
    }
    let mut selected = Vec::with_capacity(m);
    let mut nearest = alloc::vec![f64::INFINITY; n];
    let mut current = start;
    loop {
        selected.push(current);
        if selected.len() == m {
            break;
        }
        nearest[current] = f64::NEG_INFINITY;
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for i in 0..n {
            if nearest[i] == f64::NEG_INFINITY {
                continue;
            }
            nearest[i] = nearest[i].min(points.distance(i, current));
            if nearest[i] > best.0 {
                best = (nearest[i], i);
            }
        }
        current = best.1;
    }
    Ok(selected)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub n_nodes: usize,
    pub side: f64,
    pub k: usize,
    pub n_band: usize,
    pub offset: f64,
    pub sigmas: Vec<f64>,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_nodes: 100,
            side: 100.0,
            k: 5,
            n_band: 3,
            offset: 2.0,
            sigmas: alloc::vec![10.0, 15.0, 20.0, 25.0, 30.0],
            seed: 0,
            n_train: 10,
            n_test: 5,
        }
    }
}

/// A sensor graph and its clean bandlimited signal.
#[derive(Debug, Clone)]
pub struct SyntheticSample {
    pub split: Split,
    /// Index across both splits; train samples come first.
    pub index: usize,
    pub points: PointSet,
    pub graph: Graph,
    pub decomp: SpectralDecomp,
    pub clean: Signal,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 2 || self.k == 0 || self.k >= self.n_nodes {
            return Err(Error::Parameter("need N >= 2 and 1 <= k < N".into()));
        }
        if self.n_band == 0 || self.n_band > self.n_nodes {
            return Err(Error::Parameter("n_band must be in 1..=N".into()));
        }
        if self.sigmas.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Parameter("sigmas must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        self.n_train + self.n_test
    }

    pub fn split_of(&self, index: usize) -> Split {
        if index < self.n_train {
            Split::Train
        } else {
            Split::Test
        }
    }

    /// Builds sample `index`: random points, normalized kNN graph, and the
    /// bandlimited clean signal on it.
    pub fn sample(&self, index: usize) -> Result<SyntheticSample> {
        self.validate()?;
        let mut rng = stream(self.seed, index as u32, Purpose::Points);
        let points = generate_sensor_points(self.n_nodes, self.side, &mut rng)?;
        let graph = normalize_weights(&knn_graph(&points, self.k)?)?;
        let decomp = eigendecompose(&graph.laplacian())?;
        let clean = generate_bandlimited(&decomp, self.n_band, self.offset)?;
        Ok(SyntheticSample {
            split: self.split_of(index),
            index,
            points,
            graph,
            decomp,
            clean,
        })
    }

    /// The observation of sample `index` at noise level `sigma`.
    pub fn observe(&self, index: usize, clean: &Signal, sigma: f64) -> Result<Signal> {
        let mut rng = stream(self.seed, index as u32, Purpose::noise(sigma));
        add_noise(clean, sigma, &mut rng)
    }
}
