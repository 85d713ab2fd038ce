use ndarray::{Array1, ArrayView1};

use super::{Activation, Batch, LossOptions, NetworkSpec};
use crate::{Real, Result};

/// Analytic gradient against central differences of the loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    /// `max_j |a_j - f_j| / max(|a_j|, |f_j|, floor)`.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Coordinates whose stencil still crossed a ReLU kink at the smallest
    /// step; they are left out of the maxima.
    pub kinked: usize,
}

const SHRINK_STEPS: usize = 3;

/// Five-point central differences with step `h` on every coordinate.
/// `floor` keeps the relative error of vanishing components finite. For ReLU
/// networks the step is divided by 10 (up to three times) while any stencil
/// point flips a unit across the kink.
pub fn gradient_check<T: Real>(
    spec: &NetworkSpec,
    params: ArrayView1<'_, T>,
    batch: Batch<'_, T>,
    h: T,
    floor: f64,
) -> Result<GradientCheck> {
    let opts = LossOptions::default();
    let (_, analytic) = spec.loss_and_grad(params, batch, &opts)?;
    let mut probe: Array1<T> = params.to_owned();
    let mut max_rel: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut kinked = 0;
    let piecewise = spec.activation() == Activation::Relu;
    let base = if piecewise {
        spec.active_pattern(params, batch.inputs)?
    } else {
        Vec::new()
    };
    for j in 0..params.len() {
        let mut h = h;
        let mut clean = !piecewise;
        for _ in 0..=SHRINK_STEPS {
            if clean {
                break;
            }
            clean = true;
            for k in [-2.0, -1.0, 1.0, 2.0] {
                probe[j] = params[j] + h * T::lit(k);
                clean &= spec.active_pattern(probe.view(), batch.inputs)? == base;
            }
            probe[j] = params[j];
            if !clean {
                h /= T::lit(10.0);
            }
        }
        if !clean {
            kinked += 1;
            continue;
        }
        let mut at = |offset: T| -> Result<f64> {
            probe[j] = params[j] + offset;
            Ok(spec.loss_and_grad(probe.view(), batch, &opts)?.0.as_f64())
        };
        let two = h + h;
        let stencil = 8.0 * (at(h)? - at(-h)?) - (at(two)? - at(-two)?);
        probe[j] = params[j];
        let fd = stencil / (12.0 * h.as_f64());
        let a = analytic[j].as_f64();
        let err = (a - fd).abs();
        max_abs = max_abs.max(err);
        max_rel = max_rel.max(err / a.abs().max(fd.abs()).max(floor));
    }
    Ok(GradientCheck {
        max_rel_error: max_rel,
        max_abs_error: max_abs,
        kinked,
    })
}
