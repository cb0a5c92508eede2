//! Central finite-difference gradient checking.
//!
//! The numerical side only ever calls `forward`, so it is independent of the
//! hand-written backward passes it checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::layers::{Context, Layer, Mode};
use crate::Tensor;

/// Step used for central differences.
pub const STEP: f64 = 1e-4;
/// Gradients smaller than this are compared in absolute terms.
pub const MAGNITUDE_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, MAGNITUDE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    relative_error_floored(analytic, numeric, MAGNITUDE_FLOOR)
}

fn relative_error_floored(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[derive(Clone, Debug, Default)]
pub struct GradReport {
    /// Worst relative error over input entries.
    pub input: f64,
    /// Worst relative error over parameter entries.
    pub params: f64,
    pub checked: usize,
}

impl GradReport {
    pub fn worst(&self) -> f64 {
        self.input.max(self.params)
    }
}

/// Compares the layer's backward pass against central differences of the
/// scalar `L = sum(w * forward(x))` for a random projection `w`.
///
/// Every forward pass uses a fresh context seeded with `ctx_seed`, so
/// train-mode randomness (dropout masks) is identical across evaluations.
pub fn check_layer(
    layer: &mut dyn Layer<f64>,
    input: &Tensor<f64>,
    mode: Mode,
    ctx_seed: u64,
    weight_seed: u64,
) -> Result<GradReport> {
    check_layer_with_step(layer, input, mode, ctx_seed, weight_seed, STEP)
}

/// [`check_layer`] with a custom difference step. Stacks of piecewise-linear
/// layers need a smaller step so that no internal kink is crossed.
///
/// Round-off in a central difference grows as `1 / step`, so the magnitude
/// floor is scaled by `STEP / step`.
pub fn check_layer_with_step(
    layer: &mut dyn Layer<f64>,
    input: &Tensor<f64>,
    mode: Mode,
    ctx_seed: u64,
    weight_seed: u64,
    step: f64,
) -> Result<GradReport> {
    let floor = MAGNITUDE_FLOOR * STEP / step;
    let ctx = || Context::new(mode, ctx_seed);
    let out = layer.forward(input, &mut ctx())?;
    let mut rng = ChaCha8Rng::seed_from_u64(weight_seed);
    let w: Vec<f64> = (0..out.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let upstream = Tensor::from_vec(out.shape(), w.clone())?;

    layer.zero_grad();
    let dx = layer.backward(&upstream)?;
    let param_grads: Vec<Vec<f64>> =
        layer.parameters().iter().map(|(_, p)| p.grad().map(<[f64]>::to_vec).unwrap_or_default()).collect();

    let objective = |layer: &mut dyn Layer<f64>, x: &Tensor<f64>| -> Result<f64> {
        let y = layer.forward(x, &mut ctx())?;
        Ok(y.data().iter().zip(&w).map(|(a, b)| a * b).sum())
    };

    let mut report = GradReport::default();
    let mut x = input.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + step;
        let plus = objective(layer, &x)?;
        x.data_mut()[i] = orig - step;
        let minus = objective(layer, &x)?;
        x.data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        report.input = report.input.max(relative_error_floored(dx.data()[i], numeric, floor));
        report.checked += 1;
    }

    for (p_idx, analytic) in param_grads.iter().enumerate() {
        for (i, &grad) in analytic.iter().enumerate() {
            let orig = layer.parameters_mut()[p_idx].data()[i];
            layer.parameters_mut()[p_idx].data_mut()[i] = orig + step;
            let plus = objective(layer, input)?;
            layer.parameters_mut()[p_idx].data_mut()[i] = orig - step;
            let minus = objective(layer, input)?;
            layer.parameters_mut()[p_idx].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            report.params = report.params.max(relative_error_floored(grad, numeric, floor));
            report.checked += 1;
        }
    }
    Ok(report)
}

/// Uniform `[-1, 1]` tensor whose entries stay at least `margin` away from
/// zero and from each other, so kinks (ReLU) and ties (max pooling) are not
/// crossed by a finite-difference step.
pub fn well_separated_input(shape: &[usize], margin: f64, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len: usize = shape.iter().product();
    let mut values: Vec<f64> = Vec::with_capacity(len);
    while values.len() < len {
        let v: f64 = rng.random_range(-1.0..1.0);
        if v.abs() > margin && values.iter().all(|u| (u - v).abs() > margin) {
            values.push(v);
        }
    }
    Tensor::from_vec(shape, values).expect("shape product matches")
}
