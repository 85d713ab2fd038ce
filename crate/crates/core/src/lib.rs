//! Information stored in weights (IIW) for small dense networks.
//!
//! The crate covers five layers that build on each other:
//!
//! - [`nn`]: dense feed-forward networks with analytic backpropagation,
//!   per-sample gradients, SGD/Adam and inverted dropout.
//! - [`data`]: IDX ingestion, synthetic blobs, label corruption and
//!   bootstrap weights (multinomial and Poisson).
//! - [`iiw`]: Gaussian KL, the quadratic moving average of weights, the
//!   rank-`T` Fisher quadratic form and IIW tracking during training.
//! - [`fisher`]: dense Fisher/Hessian paths, influence functions, the
//!   bootstrap covariance oracle and the Gram-matrix log-determinant.
//! - [`pib`]: the Gibbs-posterior energy, SGLD, schedules and posterior
//!   ensembles.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`). The aliases at
//! the crate root fix the scalar to `f64`, which is what every tolerance in
//! the test-suite assumes.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod fisher;
pub mod iiw;
pub mod metrics;
pub mod nn;
pub mod objective;
pub mod pib;
pub mod rng;
mod scalar;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Real;

/// A point in weight space.
pub type ParamVector = ndarray::Array1<f64>;
/// A labelled dataset with `f64` inputs.
pub type Dataset = data::Dataset<f64>;
/// Ring buffer of stored gradients defining an implicit empirical Fisher.
pub type GradientBuffer = iiw::GradientBuffer<f64>;
/// Quadratic running average of the weights.
pub type MovingAverage = iiw::MovingAverage<f64>;
/// SGD/Adam state.
pub type Optimizer = nn::Optimizer<f64>;
/// Gaussian prior over weights backed by an implicit Fisher.
pub type PriorSpec = pib::PriorSpec<f64>;
/// A retained SGLD sample.
pub type PosteriorSample = pib::PosteriorSample<f64>;
