use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1};

use crate::iiw::GradientBuffer;
use crate::{Error, Real, Result};

/// Largest `D` for which a `D x D` matrix is built.
pub const DENSE_LIMIT: usize = 2000;

pub(crate) fn guard(dim: usize) -> Result<()> {
    if dim > DENSE_LIMIT {
        return Err(Error::Capacity {
            dim,
            limit: DENSE_LIMIT,
        });
    }
    Ok(())
}

pub fn array_to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_row_iterator(a.nrows(), a.ncols(), a.iter().copied())
}

/// `(M + M^T) / 2` in place.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// `(1/T) sum_t g_t g_t^T` from a `T x D` gradient matrix.
pub fn empirical_fim_dense(grads: &Array2<f64>) -> Result<DMatrix<f64>> {
    guard(grads.ncols())?;
    if grads.nrows() == 0 {
        return Err(Error::Empty("gradient matrix"));
    }
    let g = array_to_dmatrix(grads);
    let mut f = g.tr_mul(&g) / grads.nrows() as f64;
    symmetrize(&mut f);
    Ok(f)
}

/// `F v` through the stored gradients, never forming `F`.
pub fn fim_vector_product<T: Real>(
    buffer: &GradientBuffer<T>,
    v: ArrayView1<'_, T>,
) -> Result<Array1<T>> {
    buffer.fim_vector_product(v)
}

/// `(1/n) (F + damping I)^{-1}`.
pub fn prior_cov_fisher(f: &DMatrix<f64>, n: usize, damping: f64) -> Result<DMatrix<f64>> {
    guard(f.nrows())?;
    if !f.is_square() || n == 0 {
        return Err(Error::shape("prior covariance needs a square F and n >= 1"));
    }
    if damping < 0.0 {
        return Err(Error::config("damping must be >= 0"));
    }
    let d = f.nrows();
    let shifted = f + DMatrix::identity(d, d) * damping;
    let chol = shifted
        .cholesky()
        .ok_or_else(|| Error::Numeric("F + damping I is not positive definite".into()))?;
    let mut cov = chol.inverse() / n as f64;
    symmetrize(&mut cov);
    Ok(cov)
}

/// `log det[(1/n)(F + eps I)^{-1}]` from the eigenvalues of the `T x T` Gram
/// matrix `(1/T) G G^T`:
///
/// `-sum_{i<=m} log(mu_i + eps) - (D - m) log eps - D log n`, `m = min(T, D)`.
///
/// Only `T x T` matrices are formed, so any `D` works.
pub fn log_det_prior_cov(buffer: &GradientBuffer<f64>, damping: f64, n: usize) -> Result<f64> {
    if !(damping > 0.0) || !damping.is_finite() {
        return Err(Error::config(format!(
            "log-det damping must be > 0, got {damping}"
        )));
    }
    if buffer.is_empty() {
        return Err(Error::Empty("gradient buffer"));
    }
    if n == 0 {
        return Err(Error::config("n must be >= 1"));
    }
    let t = buffer.len();
    let d = buffer.dim();
    let g = buffer.to_matrix();
    let gram = array_to_dmatrix(&g.dot(&g.t())) / t as f64;
    let mut mu: Vec<f64> = SymmetricEigen::new(gram)
        .eigenvalues
        .iter()
        .map(|&x| x.max(0.0))
        .collect();
    mu.sort_by(|a, b| b.total_cmp(a));
    let m = t.min(d);
    let top: f64 = mu[..m].iter().map(|&x| (x + damping).ln()).sum();
    Ok(-top - (d - m) as f64 * damping.ln() - d as f64 * (n as f64).ln())
}
