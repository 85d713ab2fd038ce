use std::collections::VecDeque;

use ndarray::{Array1, ArrayView1, Zip};

use crate::{Error, Real, Result};

/// Quadratic (root-mean-square) running average of the weights:
/// `bar^2 <- rho * bar^2 + (1 - rho) * mean_k(theta_{t-k}^2)` over the last
/// `K` iterates, elementwise.
#[derive(Debug, Clone)]
pub struct MovingAverage<T> {
    theta_bar: Array1<T>,
    rho: T,
    window: usize,
    recent: VecDeque<Array1<T>>,
}

impl<T: Real> MovingAverage<T> {
    /// Starts at `|init|` with `init` as the only remembered iterate.
    pub fn new(init: ArrayView1<'_, T>, rho: T, window: usize) -> Result<Self> {
        if !(rho >= T::zero() && rho < T::one()) {
            return Err(Error::config(format!("rho must lie in [0, 1), got {rho}")));
        }
        if window == 0 {
            return Err(Error::config("moving-average window K must be >= 1"));
        }
        let mut recent = VecDeque::with_capacity(window);
        recent.push_back(init.to_owned());
        Ok(Self {
            theta_bar: init.mapv(|v| v.abs()),
            rho,
            window,
            recent,
        })
    }

    pub fn theta_bar(&self) -> &Array1<T> {
        &self.theta_bar
    }

    pub fn rho(&self) -> T {
        self.rho
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn remembered(&self) -> usize {
        self.recent.len()
    }

    /// Folds in the newest iterate. Until `K` iterates have been seen the
    /// window mean runs over the ones available.
    pub fn update(&mut self, params: ArrayView1<'_, T>) -> Result<()> {
        if params.len() != self.theta_bar.len() {
            return Err(Error::shape(format!(
                "iterate of length {} for a moving average of D = {}",
                params.len(),
                self.theta_bar.len()
            )));
        }
        if self.recent.len() == self.window {
            self.recent.pop_front();
        }
        self.recent.push_back(params.to_owned());
        let count = T::lit(self.recent.len() as f64);
        let mut window_sq = Array1::<T>::zeros(params.len());
        for theta in &self.recent {
            Zip::from(&mut window_sq)
                .and(theta)
                .for_each(|acc, &t| *acc += t * t);
        }
        let step = T::one() - self.rho;
        // bar^2 + (1 - rho)(m - bar^2): leaves bar untouched when m == bar^2.
        Zip::from(&mut self.theta_bar)
            .and(&window_sq)
            .for_each(|bar, &sq| {
                let old = *bar * *bar;
                *bar = (old + step * (sq / count - old)).max(T::zero()).sqrt();
            });
        Ok(())
    }

    /// The magnitudes carry no sign; this restores the sign of `reference`
    /// (normally the current iterate) so the average can be compared with a
    /// signed prior mean.
    pub fn signed(&self, reference: ArrayView1<'_, T>) -> Array1<T> {
        let mut out = self.theta_bar.clone();
        Zip::from(&mut out).and(&reference).for_each(|o, &r| {
            if r < T::zero() {
                *o = -*o;
            }
        });
        out
    }
}
