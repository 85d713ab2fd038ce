//! Datasets, IDX files, synthetic generators and bootstrap weights.

mod bootstrap;
mod idx;
mod synth;

pub use bootstrap::{multinomial_weights, poisson_weights, BootstrapWeights};
pub use idx::{
    load_idx, read_idx_images, read_idx_labels, write_idx_images, write_idx_labels, IdxImages,
};
pub use synth::{corrupt_labels, randomize_labels, subsample, synthetic_blobs, train_test_split};

use ndarray::{Array2, Axis};

use crate::nn::Batch;
use crate::{Error, Real, Result};

/// `n` labelled samples: inputs `(n x d)` and class indices in `[0, C)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    inputs: Array2<T>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl<T: Real> Dataset<T> {
    pub fn new(inputs: Array2<T>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        if inputs.nrows() != labels.len() {
            return Err(Error::shape(format!(
                "{} input rows but {} labels",
                inputs.nrows(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::shape(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("dataset inputs must be finite".into()));
        }
        Ok(Self {
            inputs,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn inputs(&self) -> &Array2<T> {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn as_batch(&self) -> Batch<'_, T> {
        Batch::new(self.inputs.view(), &self.labels)
    }

    /// Rows at `indices`, in that order. Indices may repeat.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// Same inputs, new labels.
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        Self::new(self.inputs.clone(), labels, self.num_classes)
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Converts the scalar type of the inputs.
    pub fn cast<U: Real>(&self) -> Dataset<U> {
        Dataset {
            inputs: self.inputs.mapv(|v| U::lit(v.as_f64())),
            labels: self.labels.clone(),
            num_classes: self.num_classes,
        }
    }
}

/// Epoch-wise shuffled minibatches: every sample is visited once per epoch.
#[derive(Debug, Clone)]
pub struct MinibatchSampler {
    order: Vec<usize>,
    cursor: usize,
    batch_size: usize,
}

impl MinibatchSampler {
    pub fn new(n: usize, batch_size: usize) -> Result<Self> {
        if batch_size == 0 || n == 0 {
            return Err(Error::config("minibatches need n >= 1 and B >= 1"));
        }
        Ok(Self {
            order: (0..n).collect(),
            cursor: n,
            batch_size: batch_size.min(n),
        })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Indices of the next minibatch. A new permutation is drawn whenever
    /// the remaining part of the epoch is shorter than a batch.
    pub fn next_indices<R: rand::Rng + ?Sized>(&mut self, rng: &mut R) -> &[usize] {
        use rand::seq::SliceRandom;
        if self.cursor + self.batch_size > self.order.len() {
            self.order.shuffle(rng);
            self.cursor = 0;
        }
        let start = self.cursor;
        self.cursor += self.batch_size;
        &self.order[start..self.cursor]
    }
}
