use ndarray::{Array1, ArrayView1, Zip};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

/// `w <- w - eta g + sqrt(2 eta beta) eps`, `eps ~ N(0, I)`. With
/// `beta = 0` no noise is drawn and the update equals plain SGD bit for bit.
pub fn sgld_step<T: Real, R: Rng + ?Sized>(
    params: &mut Array1<T>,
    grad: ArrayView1<'_, T>,
    eta: T,
    beta: T,
    rng: &mut R,
) -> Result<()> {
    if params.len() != grad.len() {
        return Err(Error::shape(format!(
            "gradient length {} != parameter length {}",
            grad.len(),
            params.len()
        )));
    }
    Zip::from(&mut *params)
        .and(&grad)
        .for_each(|p, &g| *p -= eta * g);
    if beta > T::zero() {
        let std = (T::lit(2.0) * eta * beta).sqrt();
        for p in params.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *p += std * T::lit(e);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decay {
    #[default]
    Cosine,
    Constant,
    /// `value0 / sqrt(1 + t / horizon)`.
    InverseSqrt,
}

/// Value at step `t`: cosine gives `value0 (1 + cos(pi t / horizon)) / 2`;
/// every kind is floored at `floor` and constant beyond the horizon.
pub fn schedule(value0: f64, t: usize, horizon: usize, kind: Decay, floor: f64) -> f64 {
    let h = horizon.max(1) as f64;
    let t = (t as f64).min(h);
    let v = match kind {
        Decay::Constant => value0,
        Decay::Cosine => value0 * 0.5 * (1.0 + (std::f64::consts::PI * t / h).cos()),
        Decay::InverseSqrt => value0 / (1.0 + t / h).sqrt(),
    };
    v.max(floor)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub value0: f64,
    pub kind: Decay,
    pub horizon: usize,
    pub floor: f64,
}

impl Schedule {
    pub fn constant(value0: f64) -> Self {
        Self {
            value0,
            kind: Decay::Constant,
            horizon: 1,
            floor: 0.0,
        }
    }

    pub fn at(&self, t: usize) -> f64 {
        schedule(self.value0, t, self.horizon, self.kind, self.floor)
    }
}

/// Settings for [`sgld_chain`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainConfig {
    pub eta: Schedule,
    pub beta: Schedule,
    pub iterations: usize,
    pub burn_in: usize,
    pub stride: usize,
}

/// Runs Langevin dynamics on an arbitrary energy given by its gradient and
/// returns every `stride`-th iterate after `burn_in`.
pub fn sgld_chain<T: Real, R: Rng + ?Sized>(
    mut grad: impl FnMut(ArrayView1<'_, T>) -> Result<Array1<T>>,
    init: Array1<T>,
    config: &ChainConfig,
    rng: &mut R,
) -> Result<Vec<Array1<T>>> {
    if config.stride == 0 || config.burn_in >= config.iterations {
        return Err(Error::config(
            "chain needs stride >= 1 and burn_in < iterations",
        ));
    }
    let mut w = init;
    let mut samples = Vec::with_capacity((config.iterations - config.burn_in) / config.stride);
    for t in 0..config.iterations {
        let g = grad(w.view())?;
        sgld_step(
            &mut w,
            g.view(),
            T::lit(config.eta.at(t)),
            T::lit(config.beta.at(t)),
            rng,
        )?;
        let k = t + 1;
        if k > config.burn_in && (k - config.burn_in).is_multiple_of(config.stride) {
            samples.push(w.clone());
        }
    }
    Ok(samples)
}
