use nalgebra::DMatrix;
use ndarray::{Array1, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dense::{guard, symmetrize};
use crate::data::poisson_weights;
use crate::objective::Objective;
use crate::{Error, Result};

/// Full-batch gradient descent with Barzilai-Borwein step lengths and a
/// non-monotone Armijo safeguard, run until `|grad| <= tol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientDescent {
    pub tol: f64,
    pub max_iter: usize,
    pub initial_step: f64,
}

impl Default for GradientDescent {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 200_000,
            initial_step: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub params: Array1<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

const MEMORY: usize = 10;

impl GradientDescent {
    pub fn minimize(
        &self,
        obj: &dyn Objective,
        init: ArrayView1<'_, f64>,
        weights: Option<&[f64]>,
    ) -> Result<Minimum> {
        let mut theta = init.to_owned();
        let (mut f, mut g) = obj.loss_grad(theta.view(), weights)?;
        let mut recent = vec![f];
        let mut step = self.initial_step;
        let mut iterations = 0;
        loop {
            let grad_norm = g.dot(&g).sqrt();
            if !f.is_finite() || !grad_norm.is_finite() {
                return Err(Error::Numeric("objective became non-finite".into()));
            }
            if grad_norm <= self.tol || iterations >= self.max_iter {
                return Ok(Minimum {
                    params: theta,
                    value: f,
                    grad_norm,
                    iterations,
                    converged: grad_norm <= self.tol,
                });
            }
            let reference = recent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let slack = 1e-13 * reference.abs().max(1.0);
            let g2 = grad_norm * grad_norm;
            let (next, f_next, g_next) = loop {
                let candidate = &theta - &(&g * step);
                let (fc, gc) = obj.loss_grad(candidate.view(), weights)?;
                if fc.is_finite() && fc <= reference - 1e-4 * step * g2 + slack {
                    break (candidate, fc, gc);
                }
                step *= 0.5;
                if step < 1e-20 {
                    return Err(Error::Numeric("line search collapsed".into()));
                }
            };
            let s = &next - &theta;
            let y = &g_next - &g;
            let sy = s.dot(&y);
            step = if sy > 0.0 {
                (s.dot(&s) / sy).clamp(1e-12, 1e12)
            } else {
                step * 2.0
            };
            theta = next;
            f = f_next;
            g = g_next;
            recent.push(f);
            if recent.len() > MEMORY {
                recent.remove(0);
            }
            iterations += 1;
        }
    }
}

/// Result of the bootstrap covariance oracle.
#[derive(Debug, Clone)]
pub struct BootstrapOracle {
    /// `(1/K) sum_k (theta_k - theta_hat)(theta_k - theta_hat)^T`.
    pub covariance: DMatrix<f64>,
    pub minimizers: Vec<Array1<f64>>,
}

/// Retrains `obj` on `k` Poisson(1)-reweighted copies of the data, starting
/// from the full-data minimiser `theta_hat`, and returns the empirical
/// covariance of the retrained minimisers around `theta_hat`.
pub fn bootstrap_covariance_oracle<R: Rng + ?Sized>(
    obj: &dyn Objective,
    theta_hat: ArrayView1<'_, f64>,
    k: usize,
    trainer: &GradientDescent,
    rng: &mut R,
) -> Result<BootstrapOracle> {
    if k < 2 {
        return Err(Error::config("the bootstrap oracle needs K >= 2"));
    }
    let d = obj.dim();
    guard(d)?;
    let mut minimizers = Vec::with_capacity(k);
    let mut failed = Vec::new();
    let mut covariance = DMatrix::zeros(d, d);
    for idx in 0..k {
        let xi = poisson_weights(obj.num_samples(), rng)?;
        let min = trainer.minimize(obj, theta_hat, Some(&xi.xi))?;
        if !min.converged {
            failed.push(idx);
        }
        let delta = nalgebra::DVector::from_iterator(d, &min.params - &theta_hat);
        covariance += &delta * delta.transpose();
        minimizers.push(min.params);
    }
    if !failed.is_empty() {
        return Err(Error::NotConverged(failed));
    }
    covariance /= k as f64;
    symmetrize(&mut covariance);
    Ok(BootstrapOracle {
        covariance,
        minimizers,
    })
}
