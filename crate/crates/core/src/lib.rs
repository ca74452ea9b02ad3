//! Simulation and analysis library for unified distributed SGD with Markovian
//! sampling: graphs and walk samplers, exact Markov-chain covariance, the
//! distributed SGD engine, and closed-form CLT predictions.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the precision.

pub mod clt;
pub mod communication;
pub mod engine;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod markov;
pub mod problems;
pub mod rng;
pub mod sampling;
pub mod scalar;
pub mod stats;

pub use error::{Error, Result};
pub use graph::Graph;
pub use sampling::{SamplerKind, SamplerSpec};
pub use scalar::Scalar;

pub type Matrix64 = linalg::Matrix<f64>;
pub type Matrix32 = linalg::Matrix<f32>;
pub type Problem64 = problems::Problem<f64>;
pub type Problem32 = problems::Problem<f32>;
pub type RunConfig64 = engine::RunConfig<f64>;
pub type RunConfig32 = engine::RunConfig<f32>;
pub type Trajectory64 = engine::Trajectory<f64>;
pub type Trajectory32 = engine::Trajectory<f32>;
pub type Ensemble64 = engine::Ensemble<f64>;
pub type Ensemble32 = engine::Ensemble<f32>;
pub type CovarianceReport64 = clt::CovarianceReport<f64>;
pub type CovarianceReport32 = clt::CovarianceReport<f32>;
