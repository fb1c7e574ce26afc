//! Weighted undirected graphs and their combinatorial Laplacian.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::Signal;

/// Relative asymmetry accepted when importing a dense adjacency matrix.
const SYMMETRY_TOL: f64 = 1e-12;

/// An undirected graph with a dense symmetric, nonnegative adjacency matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: DMatrix<f64>,
}

impl Graph {
    /// Validates and wraps a dense adjacency matrix.
    ///
    /// Entries that differ from their transpose by less than a relative
    /// `1e-12` are averaged; anything larger is rejected.
    pub fn from_adjacency(mut w: DMatrix<f64>) -> Result<Self> {
        let n = w.nrows();
        if w.ncols() != n {
            return Err(Error::InvalidGraph(format!(
                "adjacency is {}x{}, not square",
                n,
                w.ncols()
            )));
        }
        if n < 2 {
            return Err(Error::InvalidGraph(format!("need at least 2 nodes, got {n}")));
        }
        let scale = w.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            if w[(i, i)] != 0.0 {
                return Err(Error::InvalidGraph(format!("nonzero diagonal at node {i}")));
            }
            for j in (i + 1)..n {
                let (a, b) = (w[(i, j)], w[(j, i)]);
                if !a.is_finite() || !b.is_finite() {
                    return Err(Error::InvalidGraph(format!("non-finite weight at ({i}, {j})")));
                }
                if a < 0.0 || b < 0.0 {
                    return Err(Error::InvalidGraph(format!("negative weight at ({i}, {j})")));
                }
                if (a - b).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::InvalidGraph(format!(
                        "asymmetric weights at ({i}, {j}): {a} vs {b}"
                    )));
                }
                let avg = 0.5 * (a + b);
                w[(i, j)] = avg;
                w[(j, i)] = avg;
            }
        }
        Ok(Self { adjacency: w })
    }

    /// Builds a graph from undirected `(i, j, weight)` triples.
    ///
    /// Each edge is listed once; listing the same pair twice is an error.
    pub fn from_edges<I>(n_nodes: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        if n_nodes < 2 {
            return Err(Error::InvalidGraph(format!("need at least 2 nodes, got {n_nodes}")));
        }
        let mut w = DMatrix::zeros(n_nodes, n_nodes);
        for (i, j, weight) in edges {
            if i >= n_nodes || j >= n_nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) out of range for {n_nodes} nodes"
                )));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self loop at node {i}")));
            }
            if !weight.is_finite() || weight < 0.0 {
                return Err(Error::InvalidGraph(format!("bad weight {weight} on edge ({i}, {j})")));
            }
            if w[(i, j)] != 0.0 {
                return Err(Error::InvalidGraph(format!("duplicate edge ({i}, {j})")));
            }
            w[(i, j)] = weight;
            w[(j, i)] = weight;
        }
        Ok(Self { adjacency: w })
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    /// Edges with positive weight as `(i, j, w)` with `i < j`, row-major order.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n_nodes();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let w = self.adjacency[(i, j)];
                if w > 0.0 {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.edges().len()
    }

    pub fn max_weight(&self) -> f64 {
        self.adjacency.iter().fold(0.0_f64, |m, &v| m.max(v))
    }

    /// Returns a copy with every weight multiplied by `factor` (must be > 0).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(Error::Parameter(format!("weight scale must be positive, got {factor}")));
        }
        Ok(Self {
            adjacency: &self.adjacency * factor,
        })
    }

    /// Returns a copy with every weight divided by `divisor` (must be > 0).
    pub fn divided(&self, divisor: f64) -> Result<Self> {
        if !(divisor > 0.0) || !divisor.is_finite() {
            return Err(Error::Parameter(format!("weight divisor must be positive, got {divisor}")));
        }
        Ok(Self {
            adjacency: self.adjacency.map(|w| w / divisor),
        })
    }

    /// Number of connected components (edges with positive weight).
    pub fn component_count(&self) -> usize {
        let n = self.n_nodes();
        let mut seen = alloc::vec![false; n];
        let mut stack = Vec::new();
        let mut count = 0;
        for start in 0..n {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(v) = stack.pop() {
                for u in 0..n {
                    if !seen[u] && self.adjacency[(v, u)] > 0.0 {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
        }
        count
    }

    /// Edge-sum smoothness `Σ_{(n,m)∈E} W_{n,m} (x_n − x_m)²`.
    pub fn edge_smoothness(&self, x: &Signal) -> Result<f64> {
        check_len(self.n_nodes(), x.len())?;
        Ok(self
            .edges()
            .into_iter()
            .map(|(i, j, w)| {
                let d = x[i] - x[j];
                w * d * d
            })
            .sum())
    }

    pub fn laplacian(&self) -> Laplacian {
        build_laplacian(self)
    }
}

/// Combinatorial Laplacian `L = Δ − W`.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    matrix: DMatrix<f64>,
    degree: DVector<f64>,
}

impl Laplacian {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn degree(&self) -> &DVector<f64> {
        &self.degree
    }

    pub fn n_nodes(&self) -> usize {
        self.matrix.nrows()
    }

    /// `L x`.
    pub fn apply(&self, x: &Signal) -> Result<Signal> {
        check_len(self.n_nodes(), x.len())?;
        Ok(&self.matrix * x)
    }

    /// Laplacian quadratic form `xᵀ L x`; clamped at zero against round-off.
    pub fn quadratic_form(&self, x: &Signal) -> Result<f64> {
        check_len(self.n_nodes(), x.len())?;
        Ok(x.dot(&(&self.matrix * x)).max(0.0))
    }
}

pub fn build_laplacian(graph: &Graph) -> Laplacian {
    let w = graph.adjacency();
    let degree: DVector<f64> = DVector::from_iterator(w.nrows(), w.row_iter().map(|r| r.sum()));
    let mut matrix = -w.clone();
    for i in 0..w.nrows() {
        matrix[(i, i)] = degree[i];
    }
    Laplacian { matrix, degree }
}

pub fn quadratic_form(lap: &Laplacian, x: &Signal) -> Result<f64> {
    lap.quadratic_form(x)
}
