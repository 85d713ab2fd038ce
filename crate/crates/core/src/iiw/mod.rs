//! Information stored in weights.
//!
//! The tracked quantity is `n * dtheta^T F dtheta` where `F` is the empirical
//! Fisher held implicitly by a [`GradientBuffer`] and `dtheta` is the signed
//! quadratic running average of the weights minus the prior mean. Because
//! `F = (1/T) sum_t g_t g_t^T`, the quadratic form collapses to
//! `(n/T) sum_t (dtheta . g_t)^2` and no `D x D` matrix is ever built.

mod bound;
mod buffer;
mod kl;
mod moving_average;
mod tracker;

pub use bound::pac_bayes_bound;
pub use buffer::{GradientBuffer, GradientMode};
pub use kl::{gaussian_kl, Covariance, GaussianSpec};
pub use moving_average::MovingAverage;
pub use tracker::{
    collect_gradients, estimate_iiw, evaluate, track_iiw, track_iiw_with_observer, Divergence,
    Evaluation, IiwEstimate, PriorMeanPolicy, TrackConfig, TrackOutcome,
};
