//! Dense feed-forward networks with analytic gradients.
//!
//! Parameters live in one flat vector. Layer `l` contributes its weight
//! matrix (`out x in`, row-major) followed by its bias vector, so
//! `D = sum (in + 1) * out` over all layers.

mod dropout;
mod gradcheck;
mod loss;
mod network;
mod optim;

pub use dropout::{apply_dropout, dropout_mask};
pub use gradcheck::{gradient_check, GradientCheck};
pub use loss::{cross_entropy, per_sample_cross_entropy, softmax_rows};
pub use network::{argmax, Activation, Batch, LossOptions, NetworkSpec};
pub use optim::{Optimizer, OptimizerKind};
