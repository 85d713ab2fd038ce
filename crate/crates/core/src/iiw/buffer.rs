use std::collections::VecDeque;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

/// Which gradients populate the buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// Minibatch-mean gradients, one per stored entry.
    #[default]
    Minibatch,
    /// Single-sample gradients.
    PerSample,
}

impl GradientMode {
    pub fn name(self) -> &'static str {
        match self {
            GradientMode::Minibatch => "minibatch",
            GradientMode::PerSample => "per_sample",
        }
    }
}

/// Ring buffer of up to `capacity` gradients. Represents the rank-`T`
/// empirical Fisher `F = (1/T) sum_t g_t g_t^T` without materialising it.
#[derive(Debug, Clone)]
pub struct GradientBuffer<T> {
    grads: VecDeque<Array1<T>>,
    capacity: usize,
    dim: usize,
    mode: GradientMode,
}

impl<T: Real> GradientBuffer<T> {
    pub fn new(dim: usize, capacity: usize, mode: GradientMode) -> Result<Self> {
        if capacity == 0 || dim == 0 {
            return Err(Error::config(
                "gradient buffer needs capacity >= 1 and D >= 1",
            ));
        }
        Ok(Self {
            grads: VecDeque::with_capacity(capacity),
            capacity,
            dim,
            mode,
        })
    }

    /// Buffer holding exactly the rows of `grads`.
    pub fn from_rows(grads: &Array2<T>, mode: GradientMode) -> Result<Self> {
        let mut buffer = Self::new(grads.ncols(), grads.nrows().max(1), mode)?;
        for row in grads.rows() {
            buffer.push(row.to_owned())?;
        }
        Ok(buffer)
    }

    /// Appends a gradient, evicting the oldest one when full.
    pub fn push(&mut self, grad: Array1<T>) -> Result<()> {
        if grad.len() != self.dim {
            return Err(Error::shape(format!(
                "gradient of length {} pushed into a buffer of D = {}",
                grad.len(),
                self.dim
            )));
        }
        if self.grads.len() == self.capacity {
            self.grads.pop_front();
        }
        self.grads.push_back(grad);
        Ok(())
    }

    pub fn clear(&mut self) {
        self.grads.clear();
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mode(&self) -> GradientMode {
        self.mode
    }

    pub fn iter(&self) -> impl Iterator<Item = &Array1<T>> {
        self.grads.iter()
    }

    /// Stored gradients as a `T x D` matrix.
    pub fn to_matrix(&self) -> Array2<T> {
        let mut out = Array2::zeros((self.len(), self.dim));
        for (mut row, g) in out.rows_mut().into_iter().zip(&self.grads) {
            row.assign(g);
        }
        out
    }

    fn require_data(&self) -> Result<()> {
        if self.is_empty() {
            Err(Error::Empty("gradient buffer"))
        } else {
            Ok(())
        }
    }

    fn check_len(&self, v: &ArrayView1<'_, T>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::shape(format!(
                "vector of length {} against a buffer of D = {}",
                v.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// `F v = (1/T) sum_t g_t (g_t . v)` in `O(T D)`.
    pub fn fim_vector_product(&self, v: ArrayView1<'_, T>) -> Result<Array1<T>> {
        self.require_data()?;
        self.check_len(&v)?;
        let mut out = Array1::zeros(self.dim);
        for g in &self.grads {
            out.scaled_add(g.dot(&v), g);
        }
        out /= T::lit(self.len() as f64);
        Ok(out)
    }

    /// `v^T F v = (1/T) sum_t (g_t . v)^2`.
    pub fn fim_quadratic_form(&self, v: ArrayView1<'_, T>) -> Result<T> {
        self.require_data()?;
        self.check_len(&v)?;
        let total: T = self.grads.iter().map(|g| g.dot(&v).powi(2)).sum();
        Ok(total / T::lit(self.len() as f64))
    }

    /// `trace(F) / D`, the mean diagonal entry of the implicit Fisher.
    pub fn mean_diagonal(&self) -> Result<T> {
        self.require_data()?;
        let total: T = self.grads.iter().map(|g| g.dot(g)).sum();
        Ok(total / T::lit((self.len() * self.dim) as f64))
    }

    /// Default Tikhonov damping, `1e-8 * mean(diag F)`.
    pub fn default_damping(&self) -> Result<T> {
        Ok(T::lit(1e-8) * self.mean_diagonal()?)
    }
}
