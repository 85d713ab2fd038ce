use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::{Error, Real, Result};

/// Inverted-dropout factors: `0` for dropped units, `1 / (1 - rate)` for
/// kept ones, so the expected masked activation equals the input.
pub fn dropout_mask<T: Real, R: Rng + ?Sized>(
    shape: (usize, usize),
    rate: T,
    rng: &mut R,
) -> Result<Array2<T>> {
    let rate_f = rate.as_f64();
    if !(0.0..1.0).contains(&rate_f) {
        return Err(Error::config(format!(
            "dropout rate must lie in [0, 1), got {rate_f}"
        )));
    }
    let keep = T::one() / (T::one() - rate);
    Ok(Array2::from_shape_simple_fn(shape, || {
        if rng.random::<f64>() < rate_f {
            T::zero()
        } else {
            keep
        }
    }))
}

/// Applies a fresh inverted-dropout mask to `activations`.
pub fn apply_dropout<T: Real, R: Rng + ?Sized>(
    activations: ArrayView2<'_, T>,
    rate: T,
    rng: &mut R,
) -> Result<Array2<T>> {
    let mask = dropout_mask(activations.dim(), rate, rng)?;
    Ok(&activations * &mask)
}
