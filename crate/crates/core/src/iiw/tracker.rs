use ndarray::{Array1, ArrayView1};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{GradientBuffer, GradientMode, MovingAverage};
use crate::data::{Dataset, MinibatchSampler};
use crate::metrics::MetricsRecord;
use crate::nn::{LossOptions, NetworkSpec, Optimizer, OptimizerKind};
use crate::rng::SeededRng;
use crate::{Error, Real, Result};

/// One reading of the approximate information in weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IiwEstimate {
    /// `(n/T) sum_t (dtheta . g_t)^2`, reported without further scaling.
    pub value: f64,
    pub t_index: usize,
    pub n: usize,
    pub t_used: usize,
    pub mode: GradientMode,
}

/// `(n/T) sum_t (dtheta . g_t)^2` over the stored gradients.
pub fn estimate_iiw<T: Real>(
    delta_theta: ArrayView1<'_, T>,
    buffer: &GradientBuffer<T>,
    n: usize,
) -> Result<IiwEstimate> {
    let quad = buffer.fim_quadratic_form(delta_theta)?;
    Ok(IiwEstimate {
        value: (T::lit(n as f64) * quad).as_f64(),
        t_index: 0,
        n,
        t_used: buffer.len(),
        mode: buffer.mode(),
    })
}

/// Where the prior mean comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PriorMeanPolicy {
    /// The weights at initialisation.
    Init,
    /// The weights after `k` plain SGD-style iterations; `None` means one epoch.
    Warmup(Option<usize>),
}

impl std::str::FromStr for PriorMeanPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "init" => Ok(PriorMeanPolicy::Init),
            "warmup" => Ok(PriorMeanPolicy::Warmup(None)),
            other => other
                .strip_prefix("warmup:")
                .and_then(|k| k.parse().ok())
                .map(|k| PriorMeanPolicy::Warmup(Some(k)))
                .ok_or_else(|| {
                    Error::config(format!(
                        "prior mean policy {other:?} is not `init`, `warmup` or `warmup:<k>`"
                    ))
                }),
        }
    }
}

impl TryFrom<String> for PriorMeanPolicy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PriorMeanPolicy> for String {
    fn from(p: PriorMeanPolicy) -> String {
        match p {
            PriorMeanPolicy::Init => "init".into(),
            PriorMeanPolicy::Warmup(None) => "warmup".into(),
            PriorMeanPolicy::Warmup(Some(k)) => format!("warmup:{k}"),
        }
    }
}

impl PriorMeanPolicy {
    pub fn warmup_iterations(self, n: usize, batch_size: usize) -> usize {
        match self {
            PriorMeanPolicy::Init => 0,
            PriorMeanPolicy::Warmup(Some(k)) => k,
            PriorMeanPolicy::Warmup(None) => n.div_ceil(batch_size.max(1)),
        }
    }
}

/// Training and estimation settings for [`track_iiw`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackConfig {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub batch_size: usize,
    /// Iterations after the warmup.
    pub iterations: usize,
    /// When set, the budget is `epochs * ceil(n / batch_size)` iterations
    /// and `iterations` is ignored.
    pub epochs: Option<usize>,
    pub prior_mean: PriorMeanPolicy,
    /// Gradients evaluated at the current weights for every estimate (`T1`).
    pub fim_gradients: usize,
    /// Minibatch size used for the Fisher gradients; defaults to `batch_size`.
    pub fim_batch_size: Option<usize>,
    pub gradient_mode: GradientMode,
    pub rho: f64,
    pub window: usize,
    /// Iterations between estimates; defaults to a fiftieth of the budget.
    pub log_interval: Option<usize>,
    pub clip: Option<f64>,
    pub weight_decay: f64,
    pub dropout: f64,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Sgd,
            lr: 0.01,
            batch_size: 64,
            iterations: 1000,
            epochs: None,
            prior_mean: PriorMeanPolicy::Warmup(None),
            fim_gradients: 512,
            fim_batch_size: None,
            gradient_mode: GradientMode::Minibatch,
            rho: 0.9,
            window: 4,
            log_interval: None,
            clip: None,
            weight_decay: 0.0,
            dropout: 0.0,
        }
    }
}

impl TrackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.fim_gradients == 0 || self.window == 0 {
            return Err(Error::config(
                "batch_size, fim_gradients and window must all be >= 1",
            ));
        }
        if self.fim_batch_size == Some(0) || self.log_interval == Some(0) {
            return Err(Error::config(
                "fim_batch_size and log_interval must be >= 1",
            ));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::config(format!(
                "rho must lie in [0, 1), got {}",
                self.rho
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.lr < 0.0 || !self.lr.is_finite() || self.weight_decay < 0.0 {
            return Err(Error::config("lr and weight_decay must be finite and >= 0"));
        }
        if matches!(self.clip, Some(a) if a <= 0.0) {
            return Err(Error::config("clip bound must be > 0"));
        }
        Ok(())
    }

    /// Iteration budget after the warmup for a training set of size `n`.
    pub fn budget(&self, n: usize) -> usize {
        match self.epochs {
            Some(e) => e * n.div_ceil(self.batch_size.max(1)),
            None => self.iterations,
        }
    }

    pub fn log_every(&self, n: usize) -> usize {
        self.log_interval.unwrap_or((self.budget(n) / 50).max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub iter: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct TrackOutcome<T> {
    pub params: Array1<T>,
    pub theta0: Array1<T>,
    pub estimates: Vec<IiwEstimate>,
    pub metrics: Vec<MetricsRecord>,
    pub divergence: Option<Divergence>,
}

/// Fills a buffer with `count` gradients of the plain cross-entropy at
/// `params`, drawn from `data`.
pub fn collect_gradients<T: Real, R: Rng + ?Sized>(
    spec: &NetworkSpec,
    params: ArrayView1<'_, T>,
    data: &Dataset<T>,
    count: usize,
    mode: GradientMode,
    batch_size: usize,
    rng: &mut R,
) -> Result<GradientBuffer<T>> {
    let mut buffer = GradientBuffer::new(params.len(), count, mode)?;
    match mode {
        GradientMode::Minibatch => {
            let mut sampler = MinibatchSampler::new(data.len(), batch_size)?;
            for _ in 0..count {
                let batch = data.select(sampler.next_indices(rng));
                let (_, g) =
                    spec.loss_and_grad(params, batch.as_batch(), &LossOptions::default())?;
                buffer.push(g)?;
            }
        }
        GradientMode::PerSample => {
            let picked: Vec<usize> = if count <= data.len() {
                index::sample(rng, data.len(), count).into_vec()
            } else {
                (0..count)
                    .map(|_| rng.random_range(0..data.len()))
                    .collect()
            };
            let subset = data.select(&picked);
            for row in spec.per_sample_grads(params, subset.as_batch())?.rows() {
                buffer.push(row.to_owned())?;
            }
        }
    }
    Ok(buffer)
}

pub struct Evaluation {
    pub loss: f64,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
}

pub fn evaluate<T: Real>(
    spec: &NetworkSpec,
    params: ArrayView1<'_, T>,
    train: &Dataset<T>,
    test: Option<&Dataset<T>>,
) -> Result<Evaluation> {
    let logits = spec.forward(params, train.inputs().view())?;
    let loss = crate::nn::cross_entropy(logits.view(), train.labels(), None)?.as_f64();
    let hits = logits
        .rows()
        .into_iter()
        .zip(train.labels())
        .filter(|(row, &y)| crate::nn::argmax(row.view()) == y)
        .count();
    let test_acc = test
        .map(|t| spec.accuracy(params, t.as_batch()))
        .transpose()?;
    Ok(Evaluation {
        loss,
        train_acc: hits as f64 / train.len() as f64,
        test_acc,
    })
}

/// Trains `spec` from `init` and records the approximate IIW at regular
/// intervals. See [`track_iiw_with_observer`].
pub fn track_iiw<T: Real, R: Rng + ?Sized>(
    spec: &NetworkSpec,
    init: Array1<T>,
    train: &Dataset<T>,
    test: Option<&Dataset<T>>,
    config: &TrackConfig,
    rng: &mut R,
) -> Result<TrackOutcome<T>> {
    track_iiw_with_observer(spec, init, train, test, config, rng, &mut |_| Ok(()))
}

/// Runs the tracking loop:
///
/// 1. warm up for the configured number of iterations and freeze the
///    result as the prior mean `theta0`;
/// 2. keep training, folding every iterate into the quadratic moving average;
/// 3. every `log_interval` iterations evaluate `T1` fresh gradients at the
///    current weights and report `(n/T1) sum_t (dtheta . g_t)^2` with
///    `dtheta = signed(theta_bar) - theta0`.
///
/// `observer` sees each metrics record as soon as it exists. A non-finite
/// loss or gradient ends the run early; the returned outcome then carries
/// the records so far and a [`Divergence`].
pub fn track_iiw_with_observer<T: Real, R: Rng + ?Sized>(
    spec: &NetworkSpec,
    init: Array1<T>,
    train: &Dataset<T>,
    test: Option<&Dataset<T>>,
    config: &TrackConfig,
    rng: &mut R,
    observer: &mut dyn FnMut(&MetricsRecord) -> Result<()>,
) -> Result<TrackOutcome<T>> {
    config.validate()?;
    if init.len() != spec.num_params() {
        return Err(Error::shape(format!(
            "initial weights of length {} for D = {}",
            init.len(),
            spec.num_params()
        )));
    }
    let mut fim_rng = SeededRng::seed_from_u64(rng.random());
    let mut params = init;
    let mut optimizer = Optimizer::new(config.optimizer, T::lit(config.lr))?;
    let mut sampler = MinibatchSampler::new(train.len(), config.batch_size)?;
    let wd = T::lit(config.weight_decay);
    let dropout = T::lit(config.dropout);
    let clip = config.clip.map(T::lit);

    let mut train_step = |params: &mut Array1<T>, rng: &mut R| -> Result<f64> {
        let batch = train.select(sampler.next_indices(rng));
        let opts = LossOptions {
            clip,
            weights: None,
        };
        let (loss, mut grad) = if config.dropout > 0.0 {
            spec.loss_and_grad_dropout(params.view(), batch.as_batch(), &opts, dropout, rng)?
        } else {
            spec.loss_and_grad(params.view(), batch.as_batch(), &opts)?
        };
        if wd > T::zero() {
            grad.scaled_add(wd, params);
        }
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric("non-finite loss or gradient".into()));
        }
        optimizer.step(params, grad.view())?;
        Ok(loss.as_f64())
    };

    let divergence = |iter: usize, e: Error| -> Result<Divergence> {
        match e {
            Error::Numeric(_) | Error::NonFinite { .. } => Ok(Divergence {
                iter,
                reason: e.to_string(),
            }),
            other => Err(other),
        }
    };

    let warmup = config
        .prior_mean
        .warmup_iterations(train.len(), config.batch_size);
    for k in 0..warmup {
        if let Err(e) = train_step(&mut params, rng) {
            let theta0 = params.clone();
            return Ok(TrackOutcome {
                params,
                theta0,
                estimates: Vec::new(),
                metrics: Vec::new(),
                divergence: Some(divergence(k + 1, e)?),
            });
        }
    }
    let theta0 = params.clone();
    let mut average = MovingAverage::new(theta0.view(), T::lit(config.rho), config.window)?;
    let iterations = config.budget(train.len());
    let log_every = config.log_every(train.len());
    let fim_batch = config.fim_batch_size.unwrap_or(config.batch_size);
    let mut estimates = Vec::new();
    let mut metrics = Vec::new();

    for t in 1..=iterations {
        if let Err(e) = train_step(&mut params, rng) {
            return Ok(TrackOutcome {
                params,
                theta0,
                estimates,
                metrics,
                divergence: Some(divergence(t, e)?),
            });
        }
        average.update(params.view())?;
        if t % log_every != 0 && t != iterations {
            continue;
        }
        let reading = (|| -> Result<(IiwEstimate, MetricsRecord)> {
            let buffer = collect_gradients(
                spec,
                params.view(),
                train,
                config.fim_gradients,
                config.gradient_mode,
                fim_batch,
                &mut fim_rng,
            )?;
            let delta = average.signed(params.view()) - &theta0;
            let mut estimate = estimate_iiw(delta.view(), &buffer, train.len())?;
            estimate.t_index = t;
            let eval = evaluate(spec, params.view(), train, test)?;
            let record = MetricsRecord {
                iter: t,
                train_loss: eval.loss,
                train_acc: eval.train_acc,
                test_acc: eval.test_acc,
                iiw: Some(estimate.value),
                lr: config.lr,
                temperature: None,
                energy: None,
            };
            Ok((estimate, record))
        })();
        let (estimate, record) = match reading {
            Ok(r) => r,
            Err(e) => {
                return Ok(TrackOutcome {
                    params,
                    theta0,
                    estimates,
                    metrics,
                    divergence: Some(divergence(t, e)?),
                })
            }
        };
        observer(&record)?;
        estimates.push(estimate);
        metrics.push(record);
        if !record.train_loss.is_finite() {
            return Ok(TrackOutcome {
                params,
                theta0,
                estimates,
                metrics,
                divergence: Some(Divergence {
                    iter: t,
                    reason: "training loss is not finite".into(),
                }),
            });
        }
    }
    Ok(TrackOutcome {
        params,
        theta0,
        estimates,
        metrics,
        divergence: None,
    })
}
