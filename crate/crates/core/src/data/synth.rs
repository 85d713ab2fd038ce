use ndarray::Array2;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;

use super::Dataset;
use crate::{Error, Real, Result};

/// Class centres with pairwise (or, for `C > d`, neighbouring) distance
/// `separation`.
fn blob_centres(d: usize, classes: usize, separation: f64) -> Array2<f64> {
    let mut centres = Array2::zeros((classes, d));
    if classes == 2 {
        centres[[0, 0]] = -separation / 2.0;
        centres[[1, 0]] = separation / 2.0;
    } else if classes <= d {
        // Scaled simplex corners e_c * s / sqrt(2).
        for c in 0..classes {
            centres[[c, c]] = separation / 2f64.sqrt();
        }
    } else if d >= 2 {
        let radius = separation / (2.0 * (std::f64::consts::PI / classes as f64).sin());
        for c in 0..classes {
            let angle = 2.0 * std::f64::consts::PI * c as f64 / classes as f64;
            centres[[c, 0]] = radius * angle.cos();
            centres[[c, 1]] = radius * angle.sin();
        }
    } else {
        for c in 0..classes {
            centres[[c, 0]] = separation * c as f64;
        }
    }
    centres
}

/// `C` isotropic unit-variance Gaussian clusters with balanced labels.
pub fn synthetic_blobs<T: Real, R: Rng + ?Sized>(
    n: usize,
    d: usize,
    classes: usize,
    separation: f64,
    rng: &mut R,
) -> Result<Dataset<T>> {
    if classes < 2 || d == 0 || n < classes {
        return Err(Error::config(format!(
            "blobs need C >= 2, d >= 1 and n >= C (got n={n}, d={d}, C={classes})"
        )));
    }
    let centres = blob_centres(d, classes, separation);
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    labels.shuffle(rng);
    let mut inputs = Array2::<T>::zeros((n, d));
    for (i, &y) in labels.iter().enumerate() {
        for j in 0..d {
            let noise: f64 = rng.sample(StandardNormal);
            inputs[[i, j]] = T::lit(centres[[y, j]] + noise);
        }
    }
    Dataset::new(inputs, labels, classes)
}

/// Replaces the labels of exactly `floor(ratio * n)` uniformly chosen samples
/// with a uniformly drawn *different* class.
pub fn corrupt_labels<T: Real, R: Rng + ?Sized>(
    ds: &Dataset<T>,
    ratio: f64,
    rng: &mut R,
) -> Result<Dataset<T>> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::config(format!(
            "corruption ratio {ratio} outside [0, 1]"
        )));
    }
    let n = ds.len();
    let flips = (ratio * n as f64).floor() as usize;
    let classes = ds.num_classes();
    let mut labels = ds.labels().to_vec();
    for i in index::sample(rng, n, flips) {
        let shift = rng.random_range(1..classes);
        labels[i] = (labels[i] + shift) % classes;
    }
    ds.with_labels(labels)
}

/// Labels drawn i.i.d. uniformly over the classes, independent of the inputs.
pub fn randomize_labels<T: Real, R: Rng + ?Sized>(
    ds: &Dataset<T>,
    rng: &mut R,
) -> Result<Dataset<T>> {
    let classes = ds.num_classes();
    let labels = (0..ds.len())
        .map(|_| rng.random_range(0..classes))
        .collect();
    ds.with_labels(labels)
}

/// `m` distinct samples drawn without replacement.
pub fn subsample<T: Real, R: Rng + ?Sized>(
    ds: &Dataset<T>,
    m: usize,
    rng: &mut R,
) -> Result<Dataset<T>> {
    if m == 0 || m > ds.len() {
        return Err(Error::config(format!(
            "subsample size {m} must lie in [1, {}]",
            ds.len()
        )));
    }
    let picked = index::sample(rng, ds.len(), m).into_vec();
    Ok(ds.select(&picked))
}

/// Shuffles once and splits into `(train, test)` of the requested sizes.
pub fn train_test_split<T: Real, R: Rng + ?Sized>(
    ds: &Dataset<T>,
    train: usize,
    test: usize,
    rng: &mut R,
) -> Result<(Dataset<T>, Dataset<T>)> {
    if train == 0 || test == 0 || train + test > ds.len() {
        return Err(Error::config(format!(
            "cannot split {} samples into {train} train + {test} test",
            ds.len()
        )));
    }
    let picked = index::sample(rng, ds.len(), train + test).into_vec();
    Ok((ds.select(&picked[..train]), ds.select(&picked[train..])))
}
