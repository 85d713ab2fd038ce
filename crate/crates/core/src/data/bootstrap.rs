use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::{Error, Result};

/// Per-sample resampling weights `xi`.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapWeights {
    pub xi: Vec<f64>,
}

impl BootstrapWeights {
    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    pub fn ones(n: usize) -> Self {
        Self { xi: vec![1.0; n] }
    }
}

/// I.i.d. Poisson(1) counts, the large-`n` limit of Binomial(n, 1/n).
pub fn poisson_weights<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<BootstrapWeights> {
    if n == 0 {
        return Err(Error::Empty("bootstrap weights"));
    }
    let dist = Poisson::new(1.0).expect("rate 1 is valid");
    Ok(BootstrapWeights {
        xi: (0..n).map(|_| dist.sample(rng)).collect(),
    })
}

/// Classical bootstrap: counts of `n` uniform draws with replacement, so the
/// weights sum to exactly `n`.
pub fn multinomial_weights<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<BootstrapWeights> {
    if n == 0 {
        return Err(Error::Empty("bootstrap weights"));
    }
    let mut xi = vec![0.0; n];
    for _ in 0..n {
        xi[rng.random_range(0..n)] += 1.0;
    }
    Ok(BootstrapWeights { xi })
}
