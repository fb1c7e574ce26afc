//! kNN graph construction with inverse-distance weights.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, RowDVector};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Distances at or below this are treated as coincident points.
pub const MIN_DISTANCE: f64 = 1e-12;

/// `N × d` point coordinates, one point per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    coords: DMatrix<f64>,
}

impl PointSet {
    pub fn new(coords: DMatrix<f64>) -> Result<Self> {
        if coords.nrows() < 2 {
            return Err(Error::Parameter(format!(
                "point set needs at least 2 points, got {}",
                coords.nrows()
            )));
        }
        if coords.ncols() == 0 {
            return Err(Error::Parameter("points have zero dimensions".into()));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("non-finite coordinate".into()));
        }
        Ok(Self { coords })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Parameter("ragged point rows".into()));
        }
        Self::new(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
    }

    pub fn len(&self) -> usize {
        self.coords.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }

    pub fn coords(&self) -> &DMatrix<f64> {
        &self.coords
    }

    pub fn point(&self, i: usize) -> RowDVector<f64> {
        self.coords.row(i).into_owned()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        row_distance(&self.coords, i, j)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            coords: &self.coords * c,
        }
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Self::new(self.coords.select_rows(indices))
    }
}

fn row_distance(m: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    let mut acc = 0.0;
    for c in 0..m.ncols() {
        let d = m[(i, c)] - m[(j, c)];
        acc += d * d;
    }
    libm::sqrt(acc)
}

/// Unordered pairs `(i, j)`, `i < j`, where either endpoint is among the
/// other's `k` nearest neighbours. Equal distances go to the lower index.
pub fn knn_pairs(points: &PointSet, k: usize) -> Result<Vec<(usize, usize)>> {
    let n = points.len();
    if k == 0 || k >= n {
        return Err(Error::Parameter(format!("k must satisfy 1 <= k < N = {n}, got {k}")));
    }
    let mut selected = DMatrix::<bool>::from_element(n, n, false);
    let mut candidates: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        candidates.clear();
        candidates.extend((0..n).filter(|&j| j != i).map(|j| (points.distance(i, j), j)));
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(d, j) in candidates.iter().take(k) {
            if d <= MIN_DISTANCE {
                return Err(Error::DegenerateDistance(i.min(j), i.max(j)));
            }
            selected[(i.min(j), i.max(j))] = true;
        }
    }
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if selected[(i, j)] {
                pairs.push((i, j));
            }
        }
    }
    Ok(pairs)
}

/// Weights each pair by `1 / ‖f_i − f_j‖` where `f` are the rows of
/// `features` (coordinates, or signal values for signal-driven weighting).
pub fn inverse_distance_graph(
    n_nodes: usize,
    pairs: &[(usize, usize)],
    features: &DMatrix<f64>,
) -> Result<Graph> {
    if features.nrows() != n_nodes {
        return Err(Error::Dimension {
            expected: n_nodes,
            got: features.nrows(),
        });
    }
    let mut edges = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        let d = row_distance(features, i, j);
        if d <= MIN_DISTANCE {
            return Err(Error::DegenerateDistance(i, j));
        }
        edges.push((i, j, 1.0 / d));
    }
    Graph::from_edges(n_nodes, edges)
}

/// kNN graph (union symmetrization) with weights `1/‖y_i − y_j‖` from the
/// point coordinates.
pub fn knn_graph(points: &PointSet, k: usize) -> Result<Graph> {
    let pairs = knn_pairs(points, k)?;
    inverse_distance_graph(points.len(), &pairs, points.coords())
}

/// kNN topology from `points`, weights from per-node `features`.
pub fn knn_graph_with_features(
    points: &PointSet,
    k: usize,
    features: &DMatrix<f64>,
) -> Result<Graph> {
    let pairs = knn_pairs(points, k)?;
    inverse_distance_graph(points.len(), &pairs, features)
}

/// Divides every weight by the maximum weight.
pub fn normalize_weights(graph: &Graph) -> Result<Graph> {
    let max = graph.max_weight();
    if max <= 0.0 {
        return Err(Error::NoEdges);
    }
    graph.divided(max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn line(xs: &[f64]) -> PointSet {
        PointSet::new(DMatrix::from_column_slice(xs.len(), 1, xs)).unwrap()
    }

    #[test]
    fn one_dimensional_knn_by_hand() {
        let g = knn_graph(&line(&[0.0, 1.0, 3.0]), 1).unwrap();
        assert_eq!(g.edges(), vec![(0, 1, 1.0), (1, 2, 0.5)]);
    }

    #[test]
    fn complete_graph_at_k_n_minus_one() {
        let p = line(&[0.0, 1.0, 3.0, 7.0]);
        let g = knn_graph(&p, 3).unwrap();
        assert_eq!(g.edge_count(), 6);
    }

    #[test]
    fn parameter_errors() {
        let p = line(&[0.0, 1.0, 3.0]);
        assert!(matches!(knn_graph(&p, 3), Err(Error::Parameter(_))));
        assert!(matches!(knn_graph(&p, 0), Err(Error::Parameter(_))));
        let dup = line(&[0.0, 0.0, 3.0]);
        assert_eq!(knn_graph(&dup, 1), Err(Error::DegenerateDistance(0, 1)));
    }

    #[test]
    fn ties_go_to_lower_index() {
        // node 1 is equidistant from 0 and 2 and picks 0; (1, 2) only
        // appears because node 2 selects node 1.
        let pairs = knn_pairs(&line(&[0.0, 1.0, 2.0, 10.0]), 1).unwrap();
        assert_eq!(pairs, vec![(0, 1), (1, 2), (2, 3)]);
        let pairs = knn_pairs(&line(&[0.0, 1.0, 2.0]), 1).unwrap();
        assert_eq!(pairs, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn normalization_examples() {
        let g = Graph::from_edges(3, [(0, 1, 2.0), (1, 2, 4.0)]).unwrap();
        let n = normalize_weights(&g).unwrap();
        assert_eq!(n.edges(), vec![(0, 1, 0.5), (1, 2, 1.0)]);
        assert_eq!(normalize_weights(&n).unwrap(), n);

        let g = Graph::from_edges(3, [(0, 1, 1.0), (1, 2, 0.5)]).unwrap();
        assert_eq!(normalize_weights(&g).unwrap(), g);

        let empty = Graph::from_edges(3, []).unwrap();
        assert_eq!(normalize_weights(&empty), Err(Error::NoEdges));
    }

    #[test]
    fn scaling_halves_weights() {
        let p = line(&[0.0, 1.0, 3.0, 4.5]);
        let g = knn_graph(&p, 2).unwrap();
        let g2 = knn_graph(&p.scaled(2.0), 2).unwrap();
        for ((_, _, a), (_, _, b)) in g.edges().into_iter().zip(g2.edges()) {
            assert!((a - 2.0 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn signal_weighting_uses_feature_distance() {
        let p = line(&[0.0, 1.0, 3.0]);
        let f = DMatrix::from_column_slice(3, 1, &[5.0, 1.0, 2.0]);
        let g = knn_graph_with_features(&p, 1, &f).unwrap();
        assert_eq!(g.edges(), vec![(0, 1, 0.25), (1, 2, 1.0)]);
    }
}
