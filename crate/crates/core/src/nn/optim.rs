use ndarray::{Array1, ArrayView1, Zip};
use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OptimizerKind {
    Sgd,
    /// Omitted fields take the usual defaults 0.9, 0.999 and 1e-8.
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

const fn default_beta1() -> f64 {
    0.9
}

const fn default_beta2() -> f64 {
    0.999
}

const fn default_eps() -> f64 {
    1e-8
}

impl OptimizerKind {
    pub const ADAM_DEFAULT: OptimizerKind = OptimizerKind::Adam {
        beta1: default_beta1(),
        beta2: default_beta2(),
        eps: default_eps(),
    };
}

/// First-order optimizer state. Moment buffers are allocated on the first step.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    lr: T,
    steps: u64,
    first: Option<Array1<T>>,
    second: Option<Array1<T>>,
}

impl<T: Real> Optimizer<T> {
    pub fn new(kind: OptimizerKind, lr: T) -> Result<Self> {
        // Zero is allowed: it freezes the weights, which the IIW tracker
        // uses as a degenerate baseline.
        if !(lr >= T::zero()) || !lr.is_finite() {
            return Err(Error::config(format!(
                "learning rate must be >= 0, got {lr}"
            )));
        }
        if let OptimizerKind::Adam { beta1, beta2, eps } = kind {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 {
                return Err(Error::config(
                    "adam needs beta1, beta2 in [0, 1) and eps > 0",
                ));
            }
        }
        Ok(Self {
            kind,
            lr,
            steps: 0,
            first: None,
            second: None,
        })
    }

    pub fn sgd(lr: T) -> Result<Self> {
        Self::new(OptimizerKind::Sgd, lr)
    }

    pub fn adam(lr: T) -> Result<Self> {
        Self::new(OptimizerKind::ADAM_DEFAULT, lr)
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn lr(&self) -> T {
        self.lr
    }

    pub fn set_lr(&mut self, lr: T) {
        self.lr = lr;
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut Array1<T>, grad: ArrayView1<'_, T>) -> Result<()> {
        if params.len() != grad.len() {
            return Err(Error::shape(format!(
                "gradient length {} != parameter length {}",
                grad.len(),
                params.len()
            )));
        }
        self.steps += 1;
        let lr = self.lr;
        match self.kind {
            OptimizerKind::Sgd => {
                Zip::from(params).and(&grad).for_each(|p, &g| *p -= lr * g);
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let d = params.len();
                let m = self.first.get_or_insert_with(|| Array1::zeros(d));
                let v = self.second.get_or_insert_with(|| Array1::zeros(d));
                if m.len() != d {
                    return Err(Error::shape("adam state was built for another D"));
                }
                let (b1, b2, e) = (T::lit(beta1), T::lit(beta2), T::lit(eps));
                let c1 = T::one() - T::lit(beta1.powi(self.steps as i32));
                let c2 = T::one() - T::lit(beta2.powi(self.steps as i32));
                Zip::from(params)
                    .and(&grad)
                    .and(m)
                    .and(v)
                    .for_each(|p, &g, m, v| {
                        *m = b1 * *m + (T::one() - b1) * g;
                        *v = b2 * *v + (T::one() - b2) * g * g;
                        let m_hat = *m / c1;
                        let v_hat = *v / c2;
                        *p -= lr * m_hat / (v_hat.sqrt() + e);
                    });
            }
        }
        Ok(())
    }
}
