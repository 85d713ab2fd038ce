use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::prior::{energy_grad, LikelihoodScale, PriorSpec};
use super::sgld::{sgld_step, Decay, Schedule};
use crate::data::{Dataset, MinibatchSampler};
use crate::iiw::{
    collect_gradients, estimate_iiw, Divergence, GradientMode, MovingAverage, PriorMeanPolicy,
};
use crate::metrics::MetricsRecord;
use crate::nn::{softmax_rows, LossOptions, NetworkSpec, Optimizer};
use crate::rng::SeededRng;
use crate::{Error, Real, Result};

/// A retained posterior draw.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSample<T> {
    pub params: Array1<T>,
    pub iter: usize,
    pub energy: f64,
}

/// Ends a run once the running posterior mean settles: the relative change
/// over `window` new samples drops below `tol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityMonitor {
    pub window: usize,
    pub tol: f64,
}

impl Default for StabilityMonitor {
    fn default() -> Self {
        Self {
            window: 20,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SgldConfig {
    pub eta0: f64,
    pub beta0: f64,
    pub eta_decay: Decay,
    pub beta_decay: Decay,
    /// Schedule horizon; defaults to `iterations`.
    pub horizon: Option<usize>,
    pub eta_min: f64,
    pub beta_min: f64,
    /// Temperature of the injected noise at `t = 0`. Follows the shape of the
    /// beta schedule; `None` uses beta itself.
    pub noise_scale: Option<f64>,
    pub burn_in: usize,
    pub sample_stride: usize,
    pub batch_size: usize,
    pub iterations: usize,
    pub likelihood: LikelihoodScale,
    pub prior_mean: PriorMeanPolicy,
    /// Step size of the warmup SGD; defaults to `eta0`.
    pub warmup_lr: Option<f64>,
    /// Gradients stored in the prior Fisher (`T1`).
    pub fim_gradients: usize,
    /// Prior damping; defaults to `1e-8 * mean(diag F)`.
    pub damping: Option<f64>,
    pub refresh_interval: Option<usize>,
    pub stability: Option<StabilityMonitor>,
    pub log_interval: Option<usize>,
    /// Fresh gradients per diagnostic IIW reading; 0 disables it.
    pub iiw_gradients: usize,
    pub rho: f64,
    pub window: usize,
}

impl Default for SgldConfig {
    fn default() -> Self {
        Self {
            eta0: 0.05,
            beta0: 1e-3,
            eta_decay: Decay::Cosine,
            beta_decay: Decay::Cosine,
            horizon: None,
            eta_min: 0.0,
            beta_min: 1e-8,
            noise_scale: None,
            burn_in: 500,
            sample_stride: 50,
            batch_size: 64,
            iterations: 1000,
            likelihood: LikelihoodScale::ScaledSum,
            prior_mean: PriorMeanPolicy::Warmup(None),
            warmup_lr: None,
            fim_gradients: 128,
            damping: None,
            refresh_interval: None,
            stability: None,
            log_interval: None,
            iiw_gradients: 64,
            rho: 0.9,
            window: 4,
        }
    }
}

impl SgldConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.eta0) || !positive(self.beta0) {
            return Err(Error::config("eta0 and beta0 must be > 0"));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::config(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.sample_stride == 0
            || self.batch_size == 0
            || self.fim_gradients == 0
            || self.window == 0
        {
            return Err(Error::config(
                "sample_stride, batch_size, fim_gradients and window must be >= 1",
            ));
        }
        if self.eta_min < 0.0
            || self.beta_min < 0.0
            || matches!(self.noise_scale, Some(s) if s < 0.0)
        {
            return Err(Error::config("floors and noise_scale must be >= 0"));
        }
        if matches!(self.damping, Some(d) if !positive(d)) {
            return Err(Error::config("prior damping must be > 0"));
        }
        if matches!(self.warmup_lr, Some(lr) if lr < 0.0) {
            return Err(Error::config("warmup_lr must be >= 0"));
        }
        if self.log_interval == Some(0)
            || self.refresh_interval == Some(0)
            || self.horizon == Some(0)
        {
            return Err(Error::config(
                "log_interval, refresh_interval and horizon must be >= 1",
            ));
        }
        if let Some(m) = self.stability {
            if m.window == 0 || !positive(m.tol) {
                return Err(Error::config(
                    "stability monitor needs window >= 1 and tol > 0",
                ));
            }
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::config("rho must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn eta_schedule(&self) -> Schedule {
        Schedule {
            value0: self.eta0,
            kind: self.eta_decay,
            horizon: self.horizon.unwrap_or(self.iterations),
            floor: self.eta_min,
        }
    }

    pub fn beta_schedule(&self) -> Schedule {
        Schedule {
            value0: self.beta0,
            kind: self.beta_decay,
            horizon: self.horizon.unwrap_or(self.iterations),
            floor: self.beta_min,
        }
    }

    pub fn log_every(&self) -> usize {
        self.log_interval.unwrap_or((self.iterations / 50).max(1))
    }
}

#[derive(Debug, Clone)]
pub struct PibOutcome<T> {
    pub samples: Vec<PosteriorSample<T>>,
    pub metrics: Vec<MetricsRecord>,
    pub prior: PriorSpec<T>,
    /// `log det Sigma0`, reported once; `None` if it could not be formed.
    pub log_det: Option<f64>,
    /// Final weights, or the last finite weights after a divergence.
    pub params: Array1<T>,
    pub last_iter: usize,
    pub divergence: Option<Divergence>,
    /// Iteration at which the stability monitor ended the run.
    pub stopped_early: Option<usize>,
}

/// Average of the per-sample softmax outputs.
pub fn posterior_predict<T: Real>(
    samples: &[PosteriorSample<T>],
    spec: &NetworkSpec,
    inputs: ArrayView2<'_, T>,
) -> Result<Array2<T>> {
    if samples.is_empty() {
        return Err(Error::Empty("posterior samples"));
    }
    let mut total = Array2::zeros((inputs.nrows(), spec.num_classes()));
    for s in samples {
        total += &softmax_rows(spec.forward(s.params.view(), inputs)?.view());
    }
    Ok(total / T::lit(samples.len() as f64))
}

/// Accuracy of the posterior-averaged prediction.
pub fn posterior_accuracy<T: Real>(
    samples: &[PosteriorSample<T>],
    spec: &NetworkSpec,
    data: &Dataset<T>,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let probs = posterior_predict(samples, spec, data.inputs().view())?;
    let hits = probs
        .rows()
        .into_iter()
        .zip(data.labels())
        .filter(|(row, &y)| crate::nn::argmax(row.view()) == y)
        .count();
    Ok(hits as f64 / data.len() as f64)
}

pub fn run_pib_training<T: Real, R: Rng + ?Sized>(
    spec: &NetworkSpec,
    init: Array1<T>,
    train: &Dataset<T>,
    test: Option<&Dataset<T>>,
    config: &SgldConfig,
    rng: &mut R,
) -> Result<PibOutcome<T>> {
    run_pib_training_with_observer(spec, init, train, test, config, rng, &mut |_| Ok(()))
}

fn build_prior<T: Real, R: Rng + ?Sized>(
    spec: &NetworkSpec,
    theta0: Array1<T>,
    train: &Dataset<T>,
    config: &SgldConfig,
    rng: &mut R,
) -> Result<PriorSpec<T>> {
    let fim = collect_gradients(
        spec,
        theta0.view(),
        train,
        config.fim_gradients,
        GradientMode::Minibatch,
        config.batch_size,
        rng,
    )?;
    let damping = match config.damping {
        Some(d) => T::lit(d),
        None => fim.default_damping()?.max(T::lit(f64::MIN_POSITIVE)),
    };
    PriorSpec::new(theta0, fim, damping, train.len(), config.refresh_interval)
}

/// Runs the PIB sampler:
///
/// 1. warm up with plain SGD and freeze the result as the prior mean;
/// 2. fill the prior Fisher with `T1` minibatch gradients at the prior mean;
/// 3. run Langevin dynamics on `U(w) = scaled L(w) - beta log p(w)` with the
///    configured step-size and temperature schedules;
/// 4. keep every `sample_stride`-th iterate after `burn_in`.
///
/// A non-finite energy, gradient or iterate stops the run; the outcome then
/// holds the last finite weights and a [`Divergence`].
pub fn run_pib_training_with_observer<T: Real, R: Rng + ?Sized>(
    spec: &NetworkSpec,
    init: Array1<T>,
    train: &Dataset<T>,
    test: Option<&Dataset<T>>,
    config: &SgldConfig,
    rng: &mut R,
    observer: &mut dyn FnMut(&MetricsRecord) -> Result<()>,
) -> Result<PibOutcome<T>> {
    config.validate()?;
    if init.len() != spec.num_params() {
        return Err(Error::shape(format!(
            "initial weights of length {} for D = {}",
            init.len(),
            spec.num_params()
        )));
    }
    let mut aux_rng = SeededRng::seed_from_u64(rng.random());
    let mut sampler = MinibatchSampler::new(train.len(), config.batch_size)?;
    let mut params = init;

    let warmup = config
        .prior_mean
        .warmup_iterations(train.len(), config.batch_size);
    let mut sgd = Optimizer::sgd(T::lit(config.warmup_lr.unwrap_or(config.eta0)))?;
    for k in 0..warmup {
        let batch = train.select(sampler.next_indices(rng));
        let (loss, grad) =
            spec.loss_and_grad(params.view(), batch.as_batch(), &LossOptions::default())?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                iter: k + 1,
                reason: "non-finite loss during prior warmup".into(),
            });
        }
        sgd.step(&mut params, grad.view())?;
    }

    let mut prior = build_prior(spec, params.clone(), train, config, &mut aux_rng)?;
    let log_det = prior.log_det().ok();
    let eta = config.eta_schedule();
    let beta = config.beta_schedule();
    let noise_ratio = config.noise_scale.map(|s| s / config.beta0);
    let log_every = config.log_every();
    let mut average = MovingAverage::new(params.view(), T::lit(config.rho), config.window)?;

    let mut samples = Vec::new();
    let mut metrics = Vec::new();
    let mut running_sum = Array1::<f64>::zeros(params.len());
    let mut checkpoint_mean: Option<Array1<f64>> = None;
    let mut stopped_early = None;
    let mut last_iter = 0;

    for t in 1..=config.iterations {
        if let Some(r) = prior.refresh_interval {
            if t > 1 && (t - 1) % r == 0 {
                prior.fim = collect_gradients(
                    spec,
                    params.view(),
                    train,
                    config.fim_gradients,
                    GradientMode::Minibatch,
                    config.batch_size,
                    &mut aux_rng,
                )?;
            }
        }
        let eta_t = eta.at(t - 1);
        let beta_t = beta.at(t - 1);
        let noise_t = noise_ratio.map_or(beta_t, |r| r * beta_t);
        let batch = train.select(sampler.next_indices(rng));
        let step = energy_grad(
            spec,
            params.view(),
            batch.as_batch(),
            Some(&prior),
            T::lit(beta_t),
            config.likelihood,
            train.len(),
        );
        let diverged = |reason: String| Divergence { iter: t, reason };
        let e = match step {
            Ok(e) if e.energy.is_finite() && e.grad.iter().all(|g| g.is_finite()) => e,
            Ok(_) => {
                return Ok(PibOutcome {
                    samples,
                    metrics,
                    prior,
                    log_det,
                    params,
                    last_iter,
                    divergence: Some(diverged("energy or its gradient is not finite".into())),
                    stopped_early,
                })
            }
            Err(err @ Error::NonFinite { .. }) => {
                return Ok(PibOutcome {
                    samples,
                    metrics,
                    prior,
                    log_det,
                    params,
                    last_iter,
                    divergence: Some(diverged(err.to_string())),
                    stopped_early,
                })
            }
            Err(err) => return Err(err),
        };
        let before = params.clone();
        sgld_step(
            &mut params,
            e.grad.view(),
            T::lit(eta_t),
            T::lit(noise_t),
            rng,
        )?;
        if params.iter().any(|p| !p.is_finite()) {
            return Ok(PibOutcome {
                samples,
                metrics,
                prior,
                log_det,
                params: before,
                last_iter,
                divergence: Some(diverged("weights became non-finite".into())),
                stopped_early,
            });
        }
        last_iter = t;
        average.update(params.view())?;
        let energy = e.energy.as_f64();

        if t > config.burn_in && (t - config.burn_in).is_multiple_of(config.sample_stride) {
            running_sum.zip_mut_with(&params, |s, &p| *s += p.as_f64());
            samples.push(PosteriorSample {
                params: params.clone(),
                iter: t,
                energy,
            });
            if let Some(monitor) = config.stability {
                if samples.len() % monitor.window == 0 {
                    let current = &running_sum / samples.len() as f64;
                    if let Some(prev) = &checkpoint_mean {
                        let change = (&current - prev).dot(&(&current - prev)).sqrt();
                        let scale = prev.dot(prev).sqrt().max(f64::MIN_POSITIVE);
                        if change / scale < monitor.tol {
                            stopped_early = Some(t);
                        }
                    }
                    checkpoint_mean = Some(current);
                }
            }
        }

        if t % log_every == 0 || t == config.iterations || stopped_early.is_some() {
            let reading = (|| -> Result<MetricsRecord> {
                let iiw = if config.iiw_gradients > 0 {
                    let buffer = collect_gradients(
                        spec,
                        params.view(),
                        train,
                        config.iiw_gradients,
                        GradientMode::Minibatch,
                        config.batch_size,
                        &mut aux_rng,
                    )?;
                    let delta = average.signed(params.view()) - &prior.theta0;
                    Some(estimate_iiw(delta.view(), &buffer, train.len())?.value)
                } else {
                    None
                };
                let eval = crate::iiw::evaluate(spec, params.view(), train, test)?;
                Ok(MetricsRecord {
                    iter: t,
                    train_loss: eval.loss,
                    train_acc: eval.train_acc,
                    test_acc: eval.test_acc,
                    iiw,
                    lr: eta_t,
                    temperature: Some(beta_t),
                    energy: Some(energy),
                })
            })();
            let record = match reading {
                Ok(r) => r,
                Err(err @ (Error::NonFinite { .. } | Error::Numeric(_))) => {
                    return Ok(PibOutcome {
                        samples,
                        metrics,
                        prior,
                        log_det,
                        params,
                        last_iter,
                        divergence: Some(diverged(err.to_string())),
                        stopped_early,
                    })
                }
                Err(err) => return Err(err),
            };
            observer(&record)?;
            metrics.push(record);
        }
        if stopped_early.is_some() {
            break;
        }
    }
    Ok(PibOutcome {
        samples,
        metrics,
        prior,
        log_det,
        params,
        last_iter,
        divergence: None,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_blobs;
    use crate::nn::Activation;
    use crate::rng::seeded;
    use ndarray::array;

    #[test]
    fn single_sample_prediction_is_its_softmax() {
        let spec = NetworkSpec::new(vec![2, 3], Activation::Linear).unwrap();
        let params = Array1::from_iter((0..9).map(|i| i as f64 * 0.1 - 0.4));
        let x = array![[1.0, -1.0], [0.5, 2.0]];
        let s = PosteriorSample {
            params: params.clone(),
            iter: 0,
            energy: 0.0,
        };
        let single = posterior_predict(std::slice::from_ref(&s), &spec, x.view()).unwrap();
        let direct = softmax_rows(spec.forward(params.view(), x.view()).unwrap().view());
        assert_eq!(single, direct);
        let doubled = posterior_predict(&[s.clone(), s], &spec, x.view()).unwrap();
        assert!((&doubled - &direct).iter().all(|d| d.abs() < 1e-15));
    }

    #[test]
    fn two_samples_average() {
        let spec = NetworkSpec::new(vec![1, 2], Activation::Linear).unwrap();
        let a = PosteriorSample {
            params: array![1.0, -1.0, 0.0, 0.0],
            iter: 0,
            energy: 0.0,
        };
        let b = PosteriorSample {
            params: array![0.0, 0.0, 0.5, 0.0],
            iter: 1,
            energy: 0.0,
        };
        let x = array![[2.0]];
        let p = posterior_predict(&[a, b], &spec, x.view()).unwrap();
        let sa = 1.0 / (1.0 + (-4.0f64).exp());
        let sb = 1.0 / (1.0 + (-0.5f64).exp());
        assert!((p[(0, 0)] - 0.5 * (sa + sb)).abs() < 1e-12);
        assert!((p.row(0).sum() - 1.0).abs() < 1e-12);
        assert!(posterior_predict::<f64>(&[], &spec, x.view()).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SgldConfig::default().validate().is_ok());
        let bad = SgldConfig {
            burn_in: 1000,
            ..SgldConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SgldConfig {
            beta0: 0.0,
            ..SgldConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    fn small_run(seed: u64) -> PibOutcome<f64> {
        let mut rng = seeded(seed);
        let data = synthetic_blobs::<f64, _>(128, 4, 3, 3.0, &mut rng).unwrap();
        let spec = NetworkSpec::new(vec![4, 8, 3], Activation::Tanh).unwrap();
        let init = spec.init_params(&mut rng);
        let config = SgldConfig {
            iterations: 120,
            burn_in: 60,
            sample_stride: 10,
            batch_size: 16,
            fim_gradients: 16,
            iiw_gradients: 8,
            log_interval: Some(30),
            ..SgldConfig::default()
        };
        run_pib_training(&spec, init, &data, None, &config, &mut rng).unwrap()
    }

    #[test]
    fn run_is_deterministic_and_samples_after_burn_in() {
        let a = small_run(3);
        let b = small_run(3);
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.samples.len(), 6);
        assert!(a.samples.iter().all(|s| s.iter > 60));
        assert_eq!(a.metrics.len(), 4);
        assert!(a.divergence.is_none());
        assert!(a.log_det.is_some());
    }
}
