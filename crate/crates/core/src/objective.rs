//! Per-sample objectives `L_xi(theta) = (1/n) sum_j xi_j l_j(theta)` for the
//! dense Fisher, Hessian and influence paths.
//!
//! The L2 term is charged to every sample, `l_j = loss_j + (l2/2)|theta|^2`,
//! so the per-sample gradients sum to `n` times the full gradient.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::data::Dataset;
use crate::nn::{LossOptions, NetworkSpec};
use crate::{Error, Result};

pub trait Objective {
    fn dim(&self) -> usize;

    fn num_samples(&self) -> usize;

    /// Value and gradient of `(1/n) sum_j xi_j l_j`; `None` means all ones.
    fn loss_grad(
        &self,
        params: ArrayView1<'_, f64>,
        weights: Option<&[f64]>,
    ) -> Result<(f64, Array1<f64>)>;

    /// `n x D` matrix whose row `j` is the gradient of `l_j`.
    fn per_sample_grads(&self, params: ArrayView1<'_, f64>) -> Result<Array2<f64>>;
}

fn check_weights(weights: Option<&[f64]>, n: usize) -> Result<()> {
    match weights {
        Some(w) if w.len() != n => Err(Error::shape(format!(
            "{} sample weights for {n} samples",
            w.len()
        ))),
        _ => Ok(()),
    }
}

fn weight_mass(weights: Option<&[f64]>, n: usize) -> f64 {
    weights.map_or(1.0, |w| w.iter().sum::<f64>() / n as f64)
}

/// Softmax classifier (any depth) with cross-entropy and an L2 penalty.
/// A spec `[d, C]` is multinomial logistic regression.
#[derive(Debug, Clone)]
pub struct ClassifierObjective {
    pub spec: NetworkSpec,
    pub data: Dataset<f64>,
    pub l2: f64,
}

impl ClassifierObjective {
    pub fn new(spec: NetworkSpec, data: Dataset<f64>, l2: f64) -> Result<Self> {
        if spec.input_dim() != data.dim() || spec.num_classes() != data.num_classes() {
            return Err(Error::shape(
                "network and dataset disagree on input or class count",
            ));
        }
        if l2 < 0.0 {
            return Err(Error::config("l2 must be >= 0"));
        }
        Ok(Self { spec, data, l2 })
    }
}

impl Objective for ClassifierObjective {
    fn dim(&self) -> usize {
        self.spec.num_params()
    }

    fn num_samples(&self) -> usize {
        self.data.len()
    }

    fn loss_grad(
        &self,
        params: ArrayView1<'_, f64>,
        weights: Option<&[f64]>,
    ) -> Result<(f64, Array1<f64>)> {
        let n = self.num_samples();
        check_weights(weights, n)?;
        let w = weights.map(ArrayView1::from);
        let opts = LossOptions {
            clip: None,
            weights: w,
        };
        let (loss, mut grad) = self
            .spec
            .loss_and_grad(params, self.data.as_batch(), &opts)?;
        let mass = weight_mass(weights, n) * self.l2;
        grad.scaled_add(mass, &params);
        Ok((loss + 0.5 * mass * params.dot(&params), grad))
    }

    fn per_sample_grads(&self, params: ArrayView1<'_, f64>) -> Result<Array2<f64>> {
        let mut g = self.spec.per_sample_grads(params, self.data.as_batch())?;
        for mut row in g.rows_mut() {
            row.scaled_add(self.l2, &params);
        }
        Ok(g)
    }
}

/// Ridge regression, `l_j = (x_j . theta - y_j)^2 / 2 + (l2/2)|theta|^2`.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub l2: f64,
}

impl LeastSquares {
    pub fn new(x: Array2<f64>, y: Array1<f64>, l2: f64) -> Result<Self> {
        if x.nrows() != y.len() || x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::shape(format!(
                "design {:?} and {} targets",
                x.dim(),
                y.len()
            )));
        }
        if l2 < 0.0 {
            return Err(Error::config("l2 must be >= 0"));
        }
        Ok(Self { x, y, l2 })
    }

    pub fn residuals(&self, params: ArrayView1<'_, f64>) -> Array1<f64> {
        self.x.dot(&params) - &self.y
    }

    pub fn design(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }
}

impl Objective for LeastSquares {
    fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn num_samples(&self) -> usize {
        self.x.nrows()
    }

    fn loss_grad(
        &self,
        params: ArrayView1<'_, f64>,
        weights: Option<&[f64]>,
    ) -> Result<(f64, Array1<f64>)> {
        let n = self.num_samples();
        check_weights(weights, n)?;
        if params.len() != self.dim() {
            return Err(Error::shape(format!(
                "params of length {} for D = {}",
                params.len(),
                self.dim()
            )));
        }
        let mut r = self.residuals(params);
        if let Some(w) = weights {
            r.iter_mut().zip(w).for_each(|(ri, wi)| *ri *= wi);
        }
        let rr = self.residuals(params);
        let data_loss = r.dot(&rr) / (2.0 * n as f64);
        let mut grad = self.x.t().dot(&r) / n as f64;
        let mass = weight_mass(weights, n) * self.l2;
        grad.scaled_add(mass, &params);
        Ok((data_loss + 0.5 * mass * params.dot(&params), grad))
    }

    fn per_sample_grads(&self, params: ArrayView1<'_, f64>) -> Result<Array2<f64>> {
        let r = self.residuals(params);
        let mut g = &self.x * &r.insert_axis(ndarray::Axis(1));
        for mut row in g.rows_mut() {
            row.scaled_add(self.l2, &params);
        }
        Ok(g)
    }
}
