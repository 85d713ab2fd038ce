use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::iiw::GradientBuffer;
use crate::nn::{Batch, LossOptions, NetworkSpec};
use crate::{Error, Real, Result};

/// Gaussian prior `N(theta0, (1/n)(F + damping I)^{-1})` with `F` the
/// implicit Fisher of a frozen gradient buffer.
#[derive(Debug, Clone)]
pub struct PriorSpec<T> {
    pub theta0: Array1<T>,
    pub fim: GradientBuffer<T>,
    pub damping: T,
    pub n: usize,
    /// Rebuild `F` every this many iterations; `None` keeps it frozen.
    pub refresh_interval: Option<usize>,
}

impl<T: Real> PriorSpec<T> {
    pub fn new(
        theta0: Array1<T>,
        fim: GradientBuffer<T>,
        damping: T,
        n: usize,
        refresh_interval: Option<usize>,
    ) -> Result<Self> {
        if fim.dim() != theta0.len() {
            return Err(Error::shape(format!(
                "prior mean of length {} with a Fisher of D = {}",
                theta0.len(),
                fim.dim()
            )));
        }
        if !(damping > T::zero()) || !damping.is_finite() {
            return Err(Error::config(format!(
                "prior damping must be > 0, got {damping}"
            )));
        }
        if n == 0 || refresh_interval == Some(0) {
            return Err(Error::config(
                "prior needs n >= 1 and a positive refresh interval",
            ));
        }
        Ok(Self {
            theta0,
            fim,
            damping,
            n,
            refresh_interval,
        })
    }

    /// Prior with no stored gradients: precision `n * damping * I`.
    pub fn isotropic(theta0: Array1<T>, damping: T, n: usize) -> Result<Self> {
        let d = theta0.len();
        Self::new(
            theta0,
            GradientBuffer::new(d, 1, Default::default())?,
            damping,
            n,
            None,
        )
    }

    pub fn dim(&self) -> usize {
        self.theta0.len()
    }

    /// `n (F + damping I) v`, the implicit prior precision applied to `v`.
    pub fn precision_product(&self, v: ArrayView1<'_, T>) -> Result<Array1<T>> {
        let mut out = if self.fim.is_empty() {
            Array1::zeros(v.len())
        } else {
            self.fim.fim_vector_product(v)?
        };
        out.scaled_add(self.damping, &v);
        Ok(out * T::lit(self.n as f64))
    }

    /// Quadratic part of `-log p(w)`: `(w - theta0)^T Sigma0^{-1} (w - theta0)`.
    pub fn neg_log_density(&self, params: ArrayView1<'_, T>) -> Result<T> {
        let delta = self.delta(params)?;
        Ok(delta.dot(&self.precision_product(delta.view())?))
    }

    fn delta(&self, params: ArrayView1<'_, T>) -> Result<Array1<T>> {
        if params.len() != self.dim() {
            return Err(Error::shape(format!(
                "params of length {} against a prior of D = {}",
                params.len(),
                self.dim()
            )));
        }
        Ok(&params - &self.theta0)
    }

    /// `log det Sigma0` through the Gram path; constant in `w`.
    pub fn log_det(&self) -> Result<f64> {
        let g = self.fim.to_matrix().mapv(|x| x.as_f64());
        let buffer = GradientBuffer::from_rows(&g, self.fim.mode())?;
        crate::fisher::log_det_prior_cov(&buffer, self.damping.as_f64(), self.n)
    }
}

/// `2 Sigma0^{-1} (w - theta0) = 2n (F + damping I)(w - theta0)`.
pub fn prior_neg_log_grad<T: Real>(
    params: ArrayView1<'_, T>,
    prior: &PriorSpec<T>,
) -> Result<Array1<T>> {
    let delta = prior.delta(params)?;
    Ok(prior.precision_product(delta.view())? * T::lit(2.0))
}

/// How the minibatch likelihood gradient is scaled inside the energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodScale {
    /// `(B/n) sum_b`, i.e. `B^2/n` times the minibatch mean.
    #[default]
    ScaledSum,
    /// The minibatch mean, `(1/B) sum_b`.
    Standard,
}

impl LikelihoodScale {
    pub fn factor(self, batch_size: usize, n: usize) -> f64 {
        match self {
            LikelihoodScale::ScaledSum => (batch_size * batch_size) as f64 / n as f64,
            LikelihoodScale::Standard => 1.0,
        }
    }
}

/// Minibatch energy gradient and the pieces of the energy value.
#[derive(Debug, Clone)]
pub struct EnergyGrad<T> {
    pub grad: Array1<T>,
    /// Mean cross-entropy on the batch, unscaled.
    pub data_loss: T,
    /// `(w - theta0)^T Sigma0^{-1} (w - theta0)`; zero without a prior.
    pub prior_term: T,
    /// `scale * data_loss + beta * prior_term`.
    pub energy: T,
}

/// Likelihood gradient scaled per `scale`, plus `beta` times
/// [`prior_neg_log_grad`]. A positive `beta` needs a prior.
pub fn energy_grad<T: Real>(
    spec: &NetworkSpec,
    params: ArrayView1<'_, T>,
    batch: Batch<'_, T>,
    prior: Option<&PriorSpec<T>>,
    beta: T,
    scale: LikelihoodScale,
    n: usize,
) -> Result<EnergyGrad<T>> {
    if beta < T::zero() {
        return Err(Error::config(format!("beta must be >= 0, got {beta}")));
    }
    let (loss, mut grad) = spec.loss_and_grad(params, batch, &LossOptions::default())?;
    let factor = T::lit(scale.factor(batch.len(), n));
    grad *= factor;
    let mut prior_term = T::zero();
    match prior {
        Some(p) => {
            let delta = p.delta(params)?;
            let pd = p.precision_product(delta.view())?;
            prior_term = delta.dot(&pd);
            grad.scaled_add(beta * T::lit(2.0), &pd);
        }
        None if beta > T::zero() => {
            return Err(Error::config("a positive beta needs an initialised prior"));
        }
        None => {}
    }
    Ok(EnergyGrad {
        grad,
        data_loss: loss,
        prior_term,
        energy: factor * loss + beta * prior_term,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_blobs;
    use crate::fisher::empirical_fim_dense;
    use crate::iiw::GradientMode;
    use crate::nn::Activation;
    use crate::rng::seeded;
    use ndarray::{array, Array2, Axis};
    use rand_distr::{Distribution, StandardNormal};

    fn random_prior(d: usize, t: usize, seed: u64) -> PriorSpec<f64> {
        let mut rng = seeded(seed);
        let g = Array2::from_shape_simple_fn((t, d), || StandardNormal.sample(&mut rng));
        let theta0 = Array1::from_shape_simple_fn(d, || StandardNormal.sample(&mut rng));
        let buffer = GradientBuffer::from_rows(&g, GradientMode::Minibatch).unwrap();
        PriorSpec::new(theta0, buffer, 0.01, 25, None).unwrap()
    }

    #[test]
    fn gradient_vanishes_at_theta0() {
        let p = random_prior(6, 4, 1);
        let g = prior_neg_log_grad(p.theta0.view(), &p).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn isotropic_prior_pulls_uniformly() {
        let p = PriorSpec::isotropic(array![1.0, -1.0], 0.5, 10).unwrap();
        let g = prior_neg_log_grad(array![2.0, 1.0].view(), &p).unwrap();
        assert_eq!(g, array![10.0, 20.0]);
    }

    #[test]
    fn gradient_matches_dense_precision() {
        let p = random_prior(8, 5, 2);
        let w = array![0.3, -0.2, 1.0, 0.0, 0.5, -1.5, 2.0, 0.1];
        let f = empirical_fim_dense(&p.fim.to_matrix()).unwrap();
        let precision = (f + nalgebra::DMatrix::identity(8, 8) * p.damping) * p.n as f64;
        let delta = nalgebra::DVector::from_iterator(8, &w - &p.theta0);
        let dense = precision * delta * 2.0;
        let implicit = prior_neg_log_grad(w.view(), &p).unwrap();
        for i in 0..8 {
            assert!((dense[i] - implicit[i]).abs() <= 1e-10 * (1.0 + dense[i].abs()));
        }
    }

    #[test]
    fn prior_rejects_bad_damping() {
        assert!(PriorSpec::isotropic(array![0.0], 0.0, 1).is_err());
        assert!(PriorSpec::isotropic(array![0.0], 1.0, 0).is_err());
    }

    fn setup() -> (
        NetworkSpec,
        crate::data::Dataset<f64>,
        Array1<f64>,
        PriorSpec<f64>,
    ) {
        let mut rng = seeded(4);
        let data = synthetic_blobs::<f64, _>(16, 3, 2, 2.0, &mut rng).unwrap();
        let spec = NetworkSpec::new(vec![3, 4, 2], Activation::Tanh).unwrap();
        let theta = spec.init_params::<f64, _>(&mut rng);
        let d = spec.num_params();
        let g = spec
            .per_sample_grads(theta.view(), data.as_batch())
            .unwrap();
        let buffer = GradientBuffer::from_rows(&g, GradientMode::PerSample).unwrap();
        let theta0 = theta.mapv(|x| x * 0.9);
        let prior = PriorSpec::new(theta0, buffer, 1e-3, data.len(), None).unwrap();
        assert_eq!(prior.dim(), d);
        (spec, data, theta, prior)
    }

    #[test]
    fn zero_beta_is_scaled_cross_entropy() {
        let (spec, data, theta, prior) = setup();
        let e = energy_grad(
            &spec,
            theta.view(),
            data.as_batch(),
            Some(&prior),
            0.0,
            LikelihoodScale::ScaledSum,
            64,
        )
        .unwrap();
        let (_, g) = spec
            .loss_and_grad(theta.view(), data.as_batch(), &LossOptions::default())
            .unwrap();
        let factor = 16.0 * 16.0 / 64.0;
        assert!((&e.grad - &(g * factor)).iter().all(|d| d.abs() < 1e-15));
    }

    #[test]
    fn prior_term_vanishes_at_theta0() {
        let (spec, data, _, prior) = setup();
        let e = energy_grad(
            &spec,
            prior.theta0.view(),
            data.as_batch(),
            Some(&prior),
            0.7,
            LikelihoodScale::Standard,
            16,
        )
        .unwrap();
        let (_, g) = spec
            .loss_and_grad(
                prior.theta0.view(),
                data.as_batch(),
                &LossOptions::default(),
            )
            .unwrap();
        assert_eq!(e.prior_term, 0.0);
        assert!((&e.grad - &g).iter().all(|d| d.abs() < 1e-15));
    }

    #[test]
    fn full_batch_matches_per_sample_energy() {
        let (spec, data, theta, prior) = setup();
        let beta = 0.3;
        let e = energy_grad(
            &spec,
            theta.view(),
            data.as_batch(),
            Some(&prior),
            beta,
            LikelihoodScale::Standard,
            16,
        )
        .unwrap();
        let pg = prior_neg_log_grad(theta.view(), &prior).unwrap();
        let per_sample = spec
            .per_sample_grads(theta.view(), data.as_batch())
            .unwrap();
        let mut oracle = Array1::zeros(theta.len());
        for row in per_sample.axis_iter(Axis(0)) {
            oracle += &(&row + &(&pg * beta));
        }
        oracle /= 16.0;
        assert!((&e.grad - &oracle).iter().all(|d| d.abs() <= 1e-12));
    }

    #[test]
    fn energy_gradient_is_linear_in_beta() {
        let (spec, data, theta, prior) = setup();
        let at = |b: f64| {
            energy_grad(
                &spec,
                theta.view(),
                data.as_batch(),
                Some(&prior),
                b,
                LikelihoodScale::Standard,
                16,
            )
            .unwrap()
            .grad
        };
        let (g0, g1, g3) = (at(0.0), at(1.0), at(3.0));
        let predicted = &g0 + &((&g1 - &g0) * 3.0);
        assert!((&predicted - &g3)
            .iter()
            .all(|d| d.abs() <= 1e-10 * (1.0 + d.abs())));
    }

    #[test]
    fn positive_beta_requires_prior() {
        let (spec, data, theta, _) = setup();
        let err = energy_grad::<f64>(
            &spec,
            theta.view(),
            data.as_batch(),
            None,
            0.1,
            LikelihoodScale::Standard,
            16,
        );
        assert!(matches!(err, Err(Error::Config(_))));
        assert!(energy_grad::<f64>(
            &spec,
            theta.view(),
            data.as_batch(),
            None,
            0.0,
            LikelihoodScale::Standard,
            16
        )
        .is_ok());
    }

    #[test]
    fn scales_coincide_when_batch_squared_is_n() {
        assert_eq!(LikelihoodScale::ScaledSum.factor(64, 4096), 1.0);
        assert_eq!(LikelihoodScale::Standard.factor(64, 10), 1.0);
    }
}
