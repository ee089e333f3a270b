//! Spectral embeddings of random dot product graphs and their out-of-sample
//! extensions.
//!
//! The crate covers the full pipeline: sampling graphs from finite mixtures
//! of latent positions ([`model`]), adjacency and Laplacian spectral
//! embeddings ([`spectral`]), least-squares and maximum-likelihood
//! out-of-sample extensions ([`oos`]), orthogonal alignment ([`align`]),
//! closed-form limiting covariances and classification error
//! ([`limit_theory`]), and a seeded, parallel Monte Carlo harness that checks
//! the estimators against those predictions ([`montecarlo`]).
//!
//! The linear algebra is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, which is what the theory and experiment
//! modules use.

pub mod align;
pub mod cli;
pub mod error;
pub mod io;
pub mod limit_theory;
pub mod model;
pub mod montecarlo;
pub mod oos;
pub mod scalar;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type InnerProductDistribution = model::InnerProductDistribution<f64>;
pub type LatentPositions = model::LatentPositions<f64>;
pub type Embedding = spectral::Embedding<f64>;
pub type SpectralDecomposition = spectral::SpectralDecomposition<f64>;
pub type PopulationDecomposition = spectral::PopulationDecomposition<f64>;
pub type OosEstimate = oos::OosEstimate<f64>;
pub type OrthogonalAlignment = align::OrthogonalAlignment<f64>;

pub type EmbeddingF32 = spectral::Embedding<f32>;
pub type OosEstimateF32 = oos::OosEstimate<f32>;

pub use model::{AdjacencyMatrix, OosConnectivity};
pub use oos::{MlSolverOptions, OosMethod, SolverDiagnostics};
pub use spectral::EmbeddingKind;
