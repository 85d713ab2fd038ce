use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::GradientBuffer;
use crate::fisher::{empirical_fim_dense, DENSE_LIMIT};
use crate::{Error, Result};

/// Covariance of a Gaussian over weights.
#[derive(Debug, Clone)]
pub enum Covariance {
    Dense(DMatrix<f64>),
    Diagonal(DVector<f64>),
    /// `(1/n) (F + damping I)^-1` with `F` held by a gradient buffer.
    ImplicitFim {
        buffer: GradientBuffer<f64>,
        damping: f64,
        n: usize,
    },
}

impl Covariance {
    /// Dense `D x D` form. Implicit covariances are only densified up to
    /// [`DENSE_LIMIT`].
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        match self {
            Covariance::Dense(m) => Ok(m.clone()),
            Covariance::Diagonal(d) => Ok(DMatrix::from_diagonal(d)),
            Covariance::ImplicitFim { buffer, damping, n } => {
                let f = empirical_fim_dense(&buffer.to_matrix())?;
                let d = f.nrows();
                let precision = (f + DMatrix::identity(d, d) * *damping) * (*n as f64);
                precision
                    .try_inverse()
                    .ok_or_else(|| Error::Numeric("implicit Fisher covariance is singular".into()))
            }
        }
    }

    fn dim(&self) -> usize {
        match self {
            Covariance::Dense(m) => m.nrows(),
            Covariance::Diagonal(d) => d.len(),
            Covariance::ImplicitFim { buffer, .. } => buffer.dim(),
        }
    }
}

/// Multivariate normal `N(mean, covariance)`.
#[derive(Debug, Clone)]
pub struct GaussianSpec {
    pub mean: DVector<f64>,
    pub covariance: Covariance,
}

impl GaussianSpec {
    pub fn new(mean: DVector<f64>, covariance: Covariance) -> Result<Self> {
        if covariance.dim() != mean.len() {
            return Err(Error::shape(format!(
                "mean of length {} with a {}-dimensional covariance",
                mean.len(),
                covariance.dim()
            )));
        }
        if let Covariance::Dense(m) = &covariance {
            if !m.is_square() {
                return Err(Error::shape("covariance must be square"));
            }
        }
        Ok(Self { mean, covariance })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

fn cholesky(m: DMatrix<f64>, which: &str) -> Result<Cholesky<f64, Dyn>> {
    let sym = (&m + m.transpose()) * 0.5;
    Cholesky::new(sym)
        .ok_or_else(|| Error::Numeric(format!("{which} covariance is not positive definite")))
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|v| v.ln())
        .sum::<f64>()
}

/// `KL(post || prior)` between two Gaussians:
/// `1/2 [ln det S0 - ln det S1 - D + (m1-m0)^T S0^-1 (m1-m0) + tr(S0^-1 S1)]`.
pub fn gaussian_kl(post: &GaussianSpec, prior: &GaussianSpec) -> Result<f64> {
    if post.dim() != prior.dim() {
        return Err(Error::shape(format!(
            "KL between dimensions {} and {}",
            post.dim(),
            prior.dim()
        )));
    }
    let d = post.dim();
    if d > DENSE_LIMIT {
        return Err(Error::Capacity {
            dim: d,
            limit: DENSE_LIMIT,
        });
    }
    let post_chol = cholesky(post.covariance.to_dense()?, "posterior")?;
    let prior_cov = prior.covariance.to_dense()?;
    let prior_chol = cholesky(prior_cov, "prior")?;
    let diff = &post.mean - &prior.mean;
    let quad = diff.dot(&prior_chol.solve(&diff));
    let trace = prior_chol
        .solve(&post.covariance.to_dense()?)
        .diagonal()
        .sum();
    let kl = 0.5 * (log_det(&prior_chol) - log_det(&post_chol) - d as f64 + quad + trace);
    // Identical arguments can round to a tiny negative number.
    Ok(kl.max(0.0))
}
