use nalgebra::DMatrix;
use ndarray::{Array1, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use super::dense::{array_to_dmatrix, empirical_fim_dense, guard, symmetrize};
use crate::data::Dataset;
use crate::nn::{softmax_rows, NetworkSpec};
use crate::objective::{ClassifierObjective, Objective};
use crate::Result;

pub(crate) fn hessian_unsymmetrized(
    obj: &dyn Objective,
    params: ArrayView1<'_, f64>,
) -> Result<DMatrix<f64>> {
    let d = obj.dim();
    guard(d)?;
    let mut h = DMatrix::zeros(d, d);
    let mut probe: Array1<f64> = params.to_owned();
    for j in 0..d {
        let step = 1e-5 * (1.0 + params[j].abs());
        probe[j] = params[j] + step;
        let (_, up) = obj.loss_grad(probe.view(), None)?;
        probe[j] = params[j] - step;
        let (_, down) = obj.loss_grad(probe.view(), None)?;
        probe[j] = params[j];
        for i in 0..d {
            h[(i, j)] = (up[i] - down[i]) / (2.0 * step);
        }
    }
    Ok(h)
}

/// Hessian of the mean objective by central differences of the analytic
/// gradient, step `1e-5 (1 + |theta_j|)`, then symmetrised.
pub fn hessian_exact(obj: &dyn Objective, params: ArrayView1<'_, f64>) -> Result<DMatrix<f64>> {
    let mut h = hessian_unsymmetrized(obj, params)?;
    symmetrize(&mut h);
    Ok(h)
}

/// Model (generalised Gauss-Newton) Fisher of the cross-entropy,
/// `(1/n) sum_i sum_c p_ic g_ic g_ic^T` with `g_ic` the gradient of
/// `-log p_c(x_i)`.
pub fn model_fisher_dense(
    spec: &NetworkSpec,
    params: ArrayView1<'_, f64>,
    data: &Dataset<f64>,
) -> Result<DMatrix<f64>> {
    guard(spec.num_params())?;
    let probs = softmax_rows(spec.forward(params, data.inputs().view())?.view());
    let d = spec.num_params();
    let mut f = DMatrix::zeros(d, d);
    for c in 0..data.num_classes() {
        let relabelled = data.with_labels(vec![c; data.len()])?;
        let mut g = spec.per_sample_grads(params, relabelled.as_batch())?;
        for (mut row, p) in g.axis_iter_mut(Axis(0)).zip(probs.column(c)) {
            row *= p.sqrt();
        }
        let g = array_to_dmatrix(&g);
        f += g.tr_mul(&g);
    }
    f /= data.len() as f64;
    symmetrize(&mut f);
    Ok(f)
}

/// Relative Frobenius gaps `|H - F| / |F|` of the cross-entropy Hessian
/// against the model Fisher and the empirical Fisher.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherGap {
    pub model: f64,
    pub empirical: f64,
}

pub fn hessian_fisher_gap(
    spec: &NetworkSpec,
    params: ArrayView1<'_, f64>,
    data: &Dataset<f64>,
) -> Result<FisherGap> {
    let obj = ClassifierObjective::new(spec.clone(), data.clone(), 0.0)?;
    let h = hessian_exact(&obj, params)?;
    let model = model_fisher_dense(spec, params, data)?;
    let empirical = empirical_fim_dense(&spec.per_sample_grads(params, data.as_batch())?)?;
    let gap = |f: &DMatrix<f64>| (&h - f).norm() / f.norm();
    Ok(FisherGap {
        model: gap(&model),
        empirical: gap(&empirical),
    })
}
