//! Dense Fisher and Hessian paths for small models, influence functions,
//! the bootstrap covariance oracle and the Gram-matrix log-determinant.
//!
//! Dense paths refuse to materialise anything larger than
//! [`DENSE_LIMIT`]` x `[`DENSE_LIMIT`]; large models go through the implicit
//! Fisher of a [`GradientBuffer`](crate::iiw::GradientBuffer).

mod dense;
mod hessian;
mod influence;
mod oracle;

pub use dense::{
    array_to_dmatrix, empirical_fim_dense, fim_vector_product, log_det_prior_cov, prior_cov_fisher,
    symmetrize, DENSE_LIMIT,
};
pub use hessian::{hessian_exact, hessian_fisher_gap, model_fisher_dense, FisherGap};
pub use influence::{influence, perturbed_shift, InfluenceSet};
pub use oracle::{bootstrap_covariance_oracle, BootstrapOracle, GradientDescent, Minimum};
