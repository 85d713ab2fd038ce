use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::dropout::dropout_mask;
use super::loss::{check_labels, per_sample_cross_entropy, softmax_rows};
use crate::{Error, Real, Result};

/// Non-linearity applied to every hidden layer. The output layer is always
/// left linear (raw logits).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Tanh,
    Relu,
    Sigmoid,
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Linear,
        Activation::Tanh,
        Activation::Relu,
        Activation::Sigmoid,
    ];

    #[inline]
    pub fn apply<T: Real>(self, z: T) -> T {
        match self {
            Activation::Linear => z,
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(T::zero()),
            Activation::Sigmoid => T::one() / (T::one() + (-z).exp()),
        }
    }

    /// Derivative written in terms of the activation output `a = f(z)`.
    /// ReLU uses the subgradient 0 at the kink.
    #[inline]
    pub fn derivative_from_output<T: Real>(self, a: T) -> T {
        match self {
            Activation::Linear => T::one(),
            Activation::Tanh => T::one() - a * a,
            Activation::Relu => {
                if a > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => a * (T::one() - a),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Activation::Linear),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(Error::config(format!("unknown activation {other:?}"))),
        }
    }
}

/// Inputs and labels of one minibatch.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a, T> {
    pub inputs: ArrayView2<'a, T>,
    pub labels: &'a [usize],
}

impl<'a, T> Batch<'a, T> {
    pub fn new(inputs: ArrayView2<'a, T>, labels: &'a [usize]) -> Self {
        Self { inputs, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// How per-sample losses are combined into the objective
/// `(1/B) sum_i w_i * min(l_i, clip)`.
#[derive(Debug, Clone, Copy)]
pub struct LossOptions<'a, T> {
    /// Clip each per-sample loss to `[0, a]`; clipped samples have zero gradient.
    pub clip: Option<T>,
    /// Per-sample weights `w_i` (all ones when absent).
    pub weights: Option<ArrayView1<'a, T>>,
}

impl<T> Default for LossOptions<'_, T> {
    fn default() -> Self {
        Self {
            clip: None,
            weights: None,
        }
    }
}

impl<'a, T> LossOptions<'a, T> {
    pub fn clipped(a: T) -> Self {
        Self {
            clip: Some(a),
            weights: None,
        }
    }

    pub fn weighted(weights: ArrayView1<'a, T>) -> Self {
        Self {
            clip: None,
            weights: Some(weights),
        }
    }
}

/// Layer sizes (input to output) and the hidden activation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    layer_sizes: Vec<usize>,
    activation: Activation,
}

/// Offsets of one layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy)]
struct LayerSlot {
    weights: usize,
    bias: usize,
    fan_in: usize,
    fan_out: usize,
}

/// Everything the backward pass needs from the forward pass.
struct Trace<T> {
    /// Outputs of the hidden layers (after dropout scaling, if any).
    hidden: Vec<Array2<T>>,
    /// Inverted-dropout factors per hidden layer.
    masks: Vec<Option<Array2<T>>>,
    logits: Array2<T>,
}

impl NetworkSpec {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::config("a network needs at least 2 layer sizes"));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::config("layer sizes must be >= 1"));
        }
        Ok(Self {
            layer_sizes,
            activation,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_sizes.last().expect("validated")
    }

    /// Number of weight layers.
    pub fn depth(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Parameter count `D`, biases included.
    pub fn num_params(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    fn slots(&self) -> Vec<LayerSlot> {
        let mut offset = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let slot = LayerSlot {
                    weights: offset,
                    bias: offset + w[0] * w[1],
                    fan_in: w[0],
                    fan_out: w[1],
                };
                offset += (w[0] + 1) * w[1];
                slot
            })
            .collect()
    }

    fn weight_view<'a, T: Real>(slot: &LayerSlot, params: &ArrayView1<'a, T>) -> ArrayView2<'a, T> {
        (*params)
            .slice_move(s![slot.weights..slot.bias])
            .into_shape_with_order((slot.fan_out, slot.fan_in))
            .expect("contiguous weight block")
    }

    fn bias_view<'a, T: Real>(slot: &LayerSlot, params: &ArrayView1<'a, T>) -> ArrayView1<'a, T> {
        (*params).slice_move(s![slot.bias..slot.bias + slot.fan_out])
    }

    /// Glorot-uniform weights on `+-sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init_params<T: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> Array1<T> {
        let mut params = Array1::<T>::zeros(self.num_params());
        for slot in self.slots() {
            let limit = (6.0 / (slot.fan_in + slot.fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
            for w in params.slice_mut(s![slot.weights..slot.bias]) {
                *w = T::lit(dist.sample(rng));
            }
        }
        params
    }

    fn check_params<T>(&self, params: &ArrayView1<'_, T>) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::shape(format!(
                "parameter vector has length {} but the network has D = {}",
                params.len(),
                self.num_params()
            )));
        }
        Ok(())
    }

    fn check_inputs<T>(&self, inputs: &ArrayView2<'_, T>) -> Result<()> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::shape(format!(
                "inputs have {} columns but the network expects {}",
                inputs.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Which hidden units are strictly positive, flattened over layers and
    /// rows. Only meaningful for piecewise-linear activations.
    pub(crate) fn active_pattern<T: Real>(
        &self,
        params: ArrayView1<'_, T>,
        inputs: ArrayView2<'_, T>,
    ) -> Result<Vec<bool>> {
        let trace = self.run_forward::<T, rand::rngs::ThreadRng>(params, inputs, None)?;
        Ok(trace
            .hidden
            .iter()
            .flat_map(|h| h.iter().map(|&a| a > T::zero()))
            .collect())
    }

    fn run_forward<T: Real, R: Rng + ?Sized>(
        &self,
        params: ArrayView1<'_, T>,
        inputs: ArrayView2<'_, T>,
        mut dropout: Option<(T, &mut R)>,
    ) -> Result<Trace<T>> {
        self.check_params(&params)?;
        self.check_inputs(&inputs)?;
        let slots = self.slots();
        let mut hidden: Vec<Array2<T>> = Vec::with_capacity(slots.len() - 1);
        let mut masks = Vec::with_capacity(slots.len() - 1);
        for (layer, slot) in slots.iter().enumerate() {
            let w = Self::weight_view(slot, &params);
            let b = Self::bias_view(slot, &params);
            let prev = hidden.last().map_or(inputs.view(), |a| a.view());
            let mut z = prev.dot(&w.t());
            z += &b;
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    layer,
                    what: "pre-activation",
                });
            }
            if layer + 1 == slots.len() {
                return Ok(Trace {
                    hidden,
                    masks,
                    logits: z,
                });
            }
            let act = self.activation;
            z.mapv_inplace(|v| act.apply(v));
            let mask = match dropout.as_mut() {
                Some((rate, rng)) if *rate > T::zero() => {
                    let mask = dropout_mask(z.dim(), *rate, &mut **rng)?;
                    z *= &mask;
                    Some(mask)
                }
                _ => None,
            };
            masks.push(mask);
            hidden.push(z);
        }
        unreachable!("the loop returns at the output layer")
    }

    /// Logits `(B x C)` for a batch of inputs `(B x input_dim)`.
    pub fn forward<T: Real>(
        &self,
        params: ArrayView1<'_, T>,
        inputs: ArrayView2<'_, T>,
    ) -> Result<Array2<T>> {
        self.run_forward::<T, rand::rngs::ThreadRng>(params, inputs, None)
            .map(|t| t.logits)
    }

    /// Output-layer error signal `dLoss/dz` scaled per row, plus the objective.
    fn output_delta<T: Real>(
        logits: &Array2<T>,
        labels: &[usize],
        row_scale: impl Fn(usize) -> T,
        clip: Option<T>,
    ) -> Result<(T, Array2<T>)> {
        let losses = per_sample_cross_entropy(logits.view(), labels)?;
        let mut delta = softmax_rows(logits.view());
        let mut objective = T::zero();
        for (i, (mut row, &y)) in delta.axis_iter_mut(Axis(0)).zip(labels).enumerate() {
            let scale = row_scale(i);
            let loss = losses[i];
            match clip {
                Some(a) if loss > a => {
                    objective += scale * a;
                    row.fill(T::zero());
                }
                _ => {
                    objective += scale * loss;
                    row[y] -= T::one();
                    row.mapv_inplace(|v| v * scale);
                }
            }
        }
        Ok((objective, delta))
    }

    /// Backpropagates `delta` (error at the logits) and returns the flat
    /// gradient `sum_i` of the per-row contributions.
    fn backward<T: Real>(
        &self,
        params: ArrayView1<'_, T>,
        inputs: ArrayView2<'_, T>,
        trace: &Trace<T>,
        mut delta: Array2<T>,
    ) -> Result<Array1<T>> {
        let slots = self.slots();
        let mut grad = Array1::<T>::zeros(self.num_params());
        for (layer, slot) in slots.iter().enumerate().rev() {
            let prev = if layer == 0 {
                inputs.view()
            } else {
                trace.hidden[layer - 1].view()
            };
            let gw = delta.t().dot(&prev);
            grad.slice_mut(s![slot.weights..slot.bias])
                .assign(&Array1::from_iter(gw.iter().copied()));
            grad.slice_mut(s![slot.bias..slot.bias + slot.fan_out])
                .assign(&delta.sum_axis(Axis(0)));
            if layer == 0 {
                break;
            }
            let w = Self::weight_view(slot, &params);
            let mut next = delta.dot(&w);
            let act = self.activation;
            let below = &trace.hidden[layer - 1];
            match &trace.masks[layer - 1] {
                // The stored output already carries the mask; undo the
                // scaling to recover f(z) where the unit was kept.
                Some(mask) => Zip::from(&mut next)
                    .and(below)
                    .and(mask)
                    .for_each(|d, &a, &m| {
                        *d = if m > T::zero() {
                            *d * m * act.derivative_from_output(a / m)
                        } else {
                            T::zero()
                        }
                    }),
                None => Zip::from(&mut next)
                    .and(below)
                    .for_each(|d, &a| *d *= act.derivative_from_output(a)),
            }
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    layer: layer - 1,
                    what: "backpropagated error",
                });
            }
            delta = next;
        }
        Ok(grad)
    }

    fn row_scales<T: Real>(batch: &Batch<'_, T>, opts: &LossOptions<'_, T>) -> Result<Vec<T>> {
        let n = batch.len();
        if n == 0 {
            return Err(Error::Empty("batch"));
        }
        if batch.inputs.nrows() != n {
            return Err(Error::shape(format!(
                "{} input rows but {} labels",
                batch.inputs.nrows(),
                n
            )));
        }
        let inv = T::one() / T::lit(n as f64);
        match &opts.weights {
            Some(w) if w.len() != n => Err(Error::shape(format!(
                "{} loss weights for a batch of {n}",
                w.len()
            ))),
            Some(w) => Ok(w.iter().map(|&wi| wi * inv).collect()),
            None => Ok(vec![inv; n]),
        }
    }

    /// Mean (optionally weighted and clipped) cross-entropy and its exact gradient.
    pub fn loss_and_grad<T: Real>(
        &self,
        params: ArrayView1<'_, T>,
        batch: Batch<'_, T>,
        opts: &LossOptions<'_, T>,
    ) -> Result<(T, Array1<T>)> {
        self.loss_and_grad_impl::<T, rand::rngs::ThreadRng>(params, batch, opts, None)
    }

    /// As [`loss_and_grad`](Self::loss_and_grad) with inverted dropout on every
    /// hidden layer. `rate = 0` reproduces the deterministic gradient.
    pub fn loss_and_grad_dropout<T: Real, R: Rng + ?Sized>(
        &self,
        params: ArrayView1<'_, T>,
        batch: Batch<'_, T>,
        opts: &LossOptions<'_, T>,
        rate: T,
        rng: &mut R,
    ) -> Result<(T, Array1<T>)> {
        self.loss_and_grad_impl(params, batch, opts, Some((rate, rng)))
    }

    fn loss_and_grad_impl<T: Real, R: Rng + ?Sized>(
        &self,
        params: ArrayView1<'_, T>,
        batch: Batch<'_, T>,
        opts: &LossOptions<'_, T>,
        dropout: Option<(T, &mut R)>,
    ) -> Result<(T, Array1<T>)> {
        let scales = Self::row_scales(&batch, opts)?;
        check_labels(batch.labels, self.num_classes())?;
        let trace = self.run_forward(params, batch.inputs, dropout)?;
        let (loss, delta) =
            Self::output_delta(&trace.logits, batch.labels, |i| scales[i], opts.clip)?;
        let grad = self.backward(params, batch.inputs, &trace, delta)?;
        Ok((loss, grad))
    }

    /// Gradient of each sample's own (unweighted, unclipped) loss, one row
    /// per sample.
    pub fn per_sample_grads<T: Real>(
        &self,
        params: ArrayView1<'_, T>,
        batch: Batch<'_, T>,
    ) -> Result<Array2<T>> {
        Self::row_scales(&batch, &LossOptions::default())?;
        check_labels(batch.labels, self.num_classes())?;
        let trace = self.run_forward::<T, rand::rngs::ThreadRng>(params, batch.inputs, None)?;
        let (_, mut delta) = Self::output_delta(&trace.logits, batch.labels, |_| T::one(), None)?;
        let slots = self.slots();
        let mut grads = Array2::<T>::zeros((batch.len(), self.num_params()));
        for (layer, slot) in slots.iter().enumerate().rev() {
            let prev = if layer == 0 {
                batch.inputs.view()
            } else {
                trace.hidden[layer - 1].view()
            };
            for (i, mut row) in grads.axis_iter_mut(Axis(0)).enumerate() {
                let d = delta.row(i);
                let a = prev.row(i);
                let mut block = row.slice_mut(s![slot.weights..slot.bias]);
                for (o, &dv) in d.iter().enumerate() {
                    block
                        .slice_mut(s![o * slot.fan_in..(o + 1) * slot.fan_in])
                        .zip_mut_with(&a, |g, &av| *g = dv * av);
                }
                row.slice_mut(s![slot.bias..slot.bias + slot.fan_out])
                    .assign(&d);
            }
            if layer == 0 {
                break;
            }
            let w = Self::weight_view(slot, &params);
            let mut next = delta.dot(&w);
            let act = self.activation;
            Zip::from(&mut next)
                .and(&trace.hidden[layer - 1])
                .for_each(|d, &a| *d *= act.derivative_from_output(a));
            delta = next;
        }
        Ok(grads)
    }

    /// Predicted class per row; ties go to the lowest class index.
    pub fn predict<T: Real>(
        &self,
        params: ArrayView1<'_, T>,
        inputs: ArrayView2<'_, T>,
    ) -> Result<Vec<usize>> {
        let logits = self.forward(params, inputs)?;
        Ok(logits.axis_iter(Axis(0)).map(argmax).collect())
    }

    /// Fraction of rows whose predicted class matches the label.
    pub fn accuracy<T: Real>(&self, params: ArrayView1<'_, T>, batch: Batch<'_, T>) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        let predicted = self.predict(params, batch.inputs)?;
        let hits = predicted
            .iter()
            .zip(batch.labels)
            .filter(|(p, y)| p == y)
            .count();
        Ok(hits as f64 / batch.len() as f64)
    }
}

pub fn argmax<T: Real>(row: ArrayView1<'_, T>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use ndarray::array;
    use rand_distr::StandardNormal;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = seeded(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.sample::<f64, _>(StandardNormal))
    }

    /// Straightforward triple-loop evaluation, independent of the batched path.
    fn naive_forward(spec: &NetworkSpec, params: &Array1<f64>, x: &Array2<f64>) -> Array2<f64> {
        let sizes = spec.layer_sizes();
        let mut out = Array2::zeros((x.nrows(), spec.num_classes()));
        for r in 0..x.nrows() {
            let mut a: Vec<f64> = x.row(r).to_vec();
            let mut offset = 0;
            for l in 0..sizes.len() - 1 {
                let (fi, fo) = (sizes[l], sizes[l + 1]);
                let mut z = vec![0.0; fo];
                for o in 0..fo {
                    let mut acc = params[offset + fi * fo + o];
                    for i in 0..fi {
                        acc += params[offset + o * fi + i] * a[i];
                    }
                    z[o] = acc;
                }
                offset += (fi + 1) * fo;
                a = if l + 2 == sizes.len() {
                    z
                } else {
                    z.into_iter().map(|v| spec.activation().apply(v)).collect()
                };
            }
            for (c, v) in a.into_iter().enumerate() {
                out[[r, c]] = v;
            }
        }
        out
    }

    #[test]
    fn param_count_includes_biases() {
        let spec = NetworkSpec::new(vec![784, 512, 10], Activation::Relu).unwrap();
        assert_eq!(spec.num_params(), 785 * 512 + 513 * 10);
    }

    #[test]
    fn rejects_degenerate_specs() {
        assert!(NetworkSpec::new(vec![3], Activation::Tanh).is_err());
        assert!(NetworkSpec::new(vec![3, 0, 2], Activation::Tanh).is_err());
    }

    #[test]
    fn identity_single_layer() {
        let spec = NetworkSpec::new(vec![1, 1], Activation::Linear).unwrap();
        let params = array![1.0, 0.0];
        let logits = spec.forward(params.view(), array![[2.0]].view()).unwrap();
        assert_eq!(logits[[0, 0]], 2.0);
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let spec = NetworkSpec::new(vec![4, 6, 3], Activation::Sigmoid).unwrap();
        let params = Array1::zeros(spec.num_params());
        let logits = spec
            .forward(params.view(), random_matrix(5, 4, 1).view())
            .unwrap();
        assert!(logits.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batched_forward_matches_naive_loops() {
        let spec = NetworkSpec::new(vec![5, 7, 6, 4], Activation::Tanh).unwrap();
        let params = spec.init_params::<f64, _>(&mut seeded(3));
        let x = random_matrix(9, 5, 4);
        let fast = spec.forward(params.view(), x.view()).unwrap();
        let slow = naive_forward(&spec, &params, &x);
        let err = (&fast - &slow).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-12, "max deviation {err}");
    }

    #[test]
    fn shape_errors() {
        let spec = NetworkSpec::new(vec![3, 2], Activation::Linear).unwrap();
        let params = Array1::<f64>::zeros(8);
        assert!(matches!(
            spec.forward(params.view(), Array2::zeros((1, 4)).view()),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            spec.forward(Array1::<f64>::zeros(7).view(), Array2::zeros((1, 3)).view()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn non_finite_reports_layer() {
        let spec = NetworkSpec::new(vec![1, 2, 2], Activation::Linear).unwrap();
        let mut params = Array1::<f64>::ones(spec.num_params());
        params[0] = f64::INFINITY;
        let err = spec
            .forward(params.view(), array![[1.0]].view())
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite { layer: 0, .. }));
    }

    #[test]
    fn logistic_optimum_is_stationary() {
        // Two-class, one feature, no bias contribution needed: with samples
        // x=+1 (class 0) and x=-1 (class 1) plus the flipped pair, the
        // symmetric optimum of the mean loss is at zero parameters.
        let spec = NetworkSpec::new(vec![1, 2], Activation::Linear).unwrap();
        let x = array![[1.0], [-1.0], [1.0], [-1.0]];
        let y = [0, 1, 1, 0];
        let params = Array1::zeros(spec.num_params());
        let (_, g) = spec
            .loss_and_grad(
                params.view(),
                Batch::new(x.view(), &y),
                &LossOptions::default(),
            )
            .unwrap();
        assert!(g.iter().all(|v: &f64| v.abs() <= 1e-8));
    }

    #[test]
    fn doubling_weights_doubles_gradient() {
        let spec = NetworkSpec::new(vec![3, 4, 3], Activation::Tanh).unwrap();
        let params = spec.init_params::<f64, _>(&mut seeded(9));
        let x = random_matrix(6, 3, 10);
        let y = [0, 1, 2, 2, 1, 0];
        let w = array![0.3, 1.0, 2.0, 0.5, 1.5, 0.7];
        let w2 = &w * 2.0;
        let b = Batch::new(x.view(), &y);
        let (l1, g1) = spec
            .loss_and_grad(params.view(), b, &LossOptions::weighted(w.view()))
            .unwrap();
        let (l2, g2) = spec
            .loss_and_grad(params.view(), b, &LossOptions::weighted(w2.view()))
            .unwrap();
        assert_eq!(l2, 2.0 * l1);
        assert_eq!(g2, &g1 * 2.0);
    }

    #[test]
    fn clipped_samples_contribute_no_gradient() {
        let spec = NetworkSpec::new(vec![2, 3], Activation::Linear).unwrap();
        let params = spec.init_params::<f64, _>(&mut seeded(1)) * 20.0;
        let x = random_matrix(8, 2, 2);
        let y = [0, 1, 2, 0, 1, 2, 0, 1];
        let b = Batch::new(x.view(), &y);
        let losses =
            per_sample_cross_entropy(spec.forward(params.view(), x.view()).unwrap().view(), &y)
                .unwrap();
        let a = 1.0;
        let keep: Vec<usize> = (0..8).filter(|&i| losses[i] <= a).collect();
        assert!(!keep.is_empty() && keep.len() < 8);
        let (_, clipped) = spec
            .loss_and_grad(params.view(), b, &LossOptions::clipped(a))
            .unwrap();
        let per = spec.per_sample_grads(params.view(), b).unwrap();
        let mut expected = Array1::<f64>::zeros(spec.num_params());
        for &i in &keep {
            expected += &per.row(i);
        }
        expected /= 8.0;
        let err = (&clipped - &expected)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-12);
    }

    #[test]
    fn per_sample_rows_match_batch_gradient() {
        for act in Activation::ALL {
            let spec = NetworkSpec::new(vec![4, 5, 3], act).unwrap();
            let params = spec.init_params::<f64, _>(&mut seeded(5));
            let x = random_matrix(7, 4, 6);
            let y = [0, 1, 2, 1, 0, 2, 2];
            let b = Batch::new(x.view(), &y);
            let per = spec.per_sample_grads(params.view(), b).unwrap();
            let (_, g) = spec
                .loss_and_grad(params.view(), b, &LossOptions::default())
                .unwrap();
            let mean = per.mean_axis(Axis(0)).unwrap();
            let err = (&mean - &g).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(err < 1e-12, "{act:?}: {err}");
        }
    }

    #[test]
    fn single_and_duplicated_samples() {
        let spec = NetworkSpec::new(vec![3, 4, 2], Activation::Sigmoid).unwrap();
        let params = spec.init_params::<f64, _>(&mut seeded(2));
        let x1 = random_matrix(1, 3, 3);
        let (_, g) = spec
            .loss_and_grad(
                params.view(),
                Batch::new(x1.view(), &[1]),
                &LossOptions::default(),
            )
            .unwrap();
        let per = spec
            .per_sample_grads(params.view(), Batch::new(x1.view(), &[1]))
            .unwrap();
        let err = (&per.row(0) - &g)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-14);

        let x2 = ndarray::concatenate(Axis(0), &[x1.view(), x1.view()]).unwrap();
        let per = spec
            .per_sample_grads(params.view(), Batch::new(x2.view(), &[1, 1]))
            .unwrap();
        assert_eq!(per.row(0), per.row(1));
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(array![1.0, 3.0, 3.0].view()), 1);
        assert_eq!(argmax(array![0.0, 0.0].view()), 0);
    }

    #[test]
    fn accuracy_cases() {
        // Hand count: logits of a 2-in 3-class linear map.
        let spec = NetworkSpec::new(vec![2, 3], Activation::Linear).unwrap();
        // W = [[1,0],[0,1],[0,0]], b = 0: class 0 when x0 > x1 and x0 > 0, ...
        let params = array![1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let x = array![
            [2.0, 1.0],
            [1.0, 2.0],
            [-1.0, -2.0],
            [0.0, 0.0],
            [3.0, -1.0]
        ];
        // predictions: 0, 1, 2, 0 (tie), 0
        let y = [0, 1, 1, 0, 2];
        let acc = spec
            .accuracy(params.view(), Batch::new(x.view(), &y))
            .unwrap();
        assert!((acc - 3.0 / 5.0).abs() < 1e-15);
        let perfect = [0, 1, 2, 0, 0];
        assert_eq!(
            spec.accuracy(params.view(), Batch::new(x.view(), &perfect))
                .unwrap(),
            1.0
        );
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(spec
            .accuracy(params.view(), Batch::new(empty.view(), &[]))
            .is_err());
    }
}
