use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::{Error, Real, Result};

/// Row-wise softmax, stabilised by subtracting each row's maximum.
pub fn softmax_rows<T: Real>(logits: ArrayView2<'_, T>) -> Array2<T> {
    let mut out = logits.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row.mapv_inplace(|v| v / total);
    }
    out
}

pub(crate) fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    if classes < 2 {
        return Err(Error::shape(format!(
            "cross-entropy needs at least 2 classes, got {classes}"
        )));
    }
    match labels.iter().position(|&y| y >= classes) {
        Some(i) => Err(Error::shape(format!(
            "label {} at row {i} out of range for {classes} classes",
            labels[i]
        ))),
        None => Ok(()),
    }
}

/// Unclipped per-sample cross-entropy `logsumexp(z) - z_y`.
pub fn per_sample_cross_entropy<T: Real>(
    logits: ArrayView2<'_, T>,
    labels: &[usize],
) -> Result<Array1<T>> {
    if logits.nrows() != labels.len() {
        return Err(Error::shape(format!(
            "{} logit rows but {} labels",
            logits.nrows(),
            labels.len()
        )));
    }
    check_labels(labels, logits.ncols())?;
    Ok(logits
        .axis_iter(Axis(0))
        .zip(labels)
        .map(|(row, &y)| {
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
            // Rounding can leave a tiny negative value for a saturated row.
            (lse - row[y]).max(T::zero())
        })
        .collect())
}

/// Mean cross-entropy. With `clip = Some(a)` every per-sample loss is
/// clipped to `[0, a]` before averaging.
pub fn cross_entropy<T: Real>(
    logits: ArrayView2<'_, T>,
    labels: &[usize],
    clip: Option<T>,
) -> Result<T> {
    if labels.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let losses = per_sample_cross_entropy(logits, labels)?;
    let total: T = losses.iter().map(|&l| clip.map_or(l, |a| l.min(a))).sum();
    Ok(total / T::lit(labels.len() as f64))
}
