//! Consensus dynamics over time-varying interaction graphs.
//!
//! Agents follow `x_i' = (1/N) Σ_j a_ij(t) φ(|x_i - x_j|) (x_j - x_i)` where the
//! adjacency `a(t)` is a piecewise-constant signal. The crate certifies
//! windowed persistence of the signal (scrambling coefficient and algebraic
//! connectivity), integrates the dynamics and measures contraction.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod eigen;
pub mod error;
pub mod graphs;
pub mod signals;

pub use analysis::{
    diameter, fit_exponential, variance, variance_dissipation_residual, window_contraction, ContractionReport,
    DecayFit, Observable,
};
pub use config::ExperimentConfig;
pub use dynamics::{integrate, integrate_with_stops, Configuration, Kernel, Trajectory};
pub use error::{Error, Result};
pub use graphs::{algebraic_connectivity, dirichlet_energy, laplacian, scrambling, AdjacencyMatrix};
pub use signals::{
    certify_eta, certify_lambda2, PersistenceKind, PersistenceReport, PiecewiseConstantSignal, SignalMode, Window,
};
