use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, Axis};

use super::dense::{array_to_dmatrix, guard};
use super::hessian::hessian_exact;
use crate::data::BootstrapWeights;
use crate::objective::Objective;
use crate::{Error, Result};

enum Factor {
    Cholesky(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl Factor {
    fn new(h: &DMatrix<f64>, damping: f64) -> Result<Self> {
        guard(h.nrows())?;
        if !h.is_square() {
            return Err(Error::shape("Hessian must be square"));
        }
        let d = h.nrows();
        let shifted = h + DMatrix::identity(d, d) * damping;
        if let Some(c) = shifted.clone().cholesky() {
            return Ok(Factor::Cholesky(c));
        }
        let lu = shifted.lu();
        if !lu.is_invertible() {
            return Err(Error::Numeric("H + damping I is singular".into()));
        }
        Ok(Factor::Lu(lu))
    }

    fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let x = match self {
            Factor::Cholesky(c) => c.solve(b),
            Factor::Lu(lu) => lu
                .solve(b)
                .ok_or_else(|| Error::Numeric("H + damping I is singular".into()))?,
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(
                "influence solve produced non-finite values".into(),
            ));
        }
        Ok(x)
    }
}

/// `psi_j = -(H + damping I)^{-1} grad_j`. Removing sample `j` moves the
/// minimiser by about `-psi_j / n`.
pub fn influence(
    h: &DMatrix<f64>,
    grad_j: ArrayView1<'_, f64>,
    damping: f64,
) -> Result<Array1<f64>> {
    if grad_j.len() != h.nrows() {
        return Err(Error::shape(format!(
            "gradient of length {} against a {}x{} Hessian",
            grad_j.len(),
            h.nrows(),
            h.ncols()
        )));
    }
    let factor = Factor::new(h, damping)?;
    let x = factor.solve(&DVector::from_iterator(
        grad_j.len(),
        grad_j.iter().copied(),
    ))?;
    Ok(x.iter().map(|v| -v).collect())
}

/// All influence vectors of a dataset, one row per sample.
#[derive(Debug, Clone)]
pub struct InfluenceSet {
    psi: Array2<f64>,
}

impl InfluenceSet {
    /// `psi = -G (H + damping I)^{-1}` for the `n x D` per-sample gradients `G`.
    pub fn compute(h: &DMatrix<f64>, grads: &Array2<f64>, damping: f64) -> Result<Self> {
        if grads.ncols() != h.nrows() {
            return Err(Error::shape("gradient rows and Hessian disagree on D"));
        }
        let factor = Factor::new(h, damping)?;
        let rhs = array_to_dmatrix(grads).transpose();
        let mut psi = Array2::zeros(grads.dim());
        for (j, mut row) in psi.axis_iter_mut(Axis(0)).enumerate() {
            let x = factor.solve(&rhs.column(j).into_owned())?;
            row.iter_mut().zip(x.iter()).for_each(|(p, v)| *p = -v);
        }
        Ok(Self { psi })
    }

    /// Hessian by finite differences and per-sample gradients at `params`.
    pub fn from_objective(
        obj: &dyn Objective,
        params: ArrayView1<'_, f64>,
        damping: f64,
    ) -> Result<Self> {
        let h = hessian_exact(obj, params)?;
        Self::compute(&h, &obj.per_sample_grads(params)?, damping)
    }

    pub fn psi(&self) -> &Array2<f64> {
        &self.psi
    }

    pub fn len(&self) -> usize {
        self.psi.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.nrows() == 0
    }

    /// Predicted change of the minimiser when sample `j` is dropped.
    pub fn loo_change(&self, j: usize) -> Array1<f64> {
        self.psi.row(j).mapv(|v| -v / self.len() as f64)
    }

    /// `Psi^T 1`; close to zero at an exact minimiser.
    pub fn column_sums(&self) -> Array1<f64> {
        self.psi.sum_axis(Axis(0))
    }

    pub fn mean_row_norm(&self) -> f64 {
        self.psi
            .rows()
            .into_iter()
            .map(|r| r.dot(&r).sqrt())
            .sum::<f64>()
            / self.len() as f64
    }
}

/// First-order shift of the reweighted minimiser, `(1/n) Psi^T (xi - 1)`.
pub fn perturbed_shift(set: &InfluenceSet, xi: &BootstrapWeights) -> Result<Array1<f64>> {
    if xi.len() != set.len() {
        return Err(Error::shape(format!(
            "{} weights for {} influence vectors",
            xi.len(),
            set.len()
        )));
    }
    let centred: Array1<f64> = xi.xi.iter().map(|w| w - 1.0).collect();
    Ok(set.psi.t().dot(&centred) / set.len() as f64)
}
