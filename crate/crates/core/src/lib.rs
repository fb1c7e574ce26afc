//! Graph-signal denoising with Regularization by Denoising (RED).
//!
//! Laplacian-regularized and PnP-ADMM graph denoisers plug into a RED
//! objective solved by gradient descent or conjugate gradient. The CG
//! solver can be unrolled with per-layer parameters and trained either
//! against clean targets or with Noise2Noise re-noising.

#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cg;
pub mod construct;
pub mod datagen;
pub mod denoise;
pub mod error;
pub mod filter;
pub mod graph;
pub mod metrics;
pub mod red;
pub mod rng;
pub mod spectral;
pub mod train;
pub mod tune;
pub mod unroll;

/// A real value per graph node.
pub type Signal = nalgebra::DVector<f64>;

pub use construct::{knn_graph, normalize_weights, PointSet};
pub use denoise::{Denoiser, DenoiserKind, GraphDenoiser, GraphOperator, LrSolve, PreparedDenoiser, XUpdate};
pub use error::{Error, Result};
pub use graph::{build_laplacian, quadratic_form, Graph, Laplacian};
pub use metrics::{mse, rmse};
pub use red::{red_cg_solve, RedCgOptions, RedLayer, RedProblem, RedSolveReport, StopReason};
pub use spectral::{eigendecompose, SpectralDecomp};
pub use unroll::{unrolled_forward, UnrolledParams};
pub use train::{train, TrainConfig, TrainMode, TrainSample};
pub use tune::{grid_search, Method, MethodParams};
