//! Layers with hand-written backward passes.
//!
//! Every layer consumes batched tensors whose first axis is the batch. Sequence
//! layers use `[batch, time, channels]`. `forward` caches whatever `backward`
//! needs; `backward` takes the gradient of the loss with respect to the layer
//! output, accumulates parameter gradients, and returns the gradient with
//! respect to the input.

mod activation;
mod attention;
mod batchnorm;
mod conv;
mod dense;
mod layer_norm;
mod pool;

pub use activation::{relu, softmax_in_place, Dropout, Relu, Softmax};
pub use attention::MultiHeadAttention;
pub use batchnorm::BatchNorm1d;
pub use conv::Conv1d;
pub use dense::Dense;
pub use layer_norm::LayerNorm;
pub use pool::{Flatten, GlobalMaxPool1d, MaxPool1d};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-pass state: the mode and the RNG that drives dropout masks.
#[derive(Clone, Debug)]
pub struct Context {
    pub mode: Mode,
    rng: ChaCha8Rng,
}

impl Context {
    pub fn new(mode: Mode, seed: u64) -> Self {
        Self { mode, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn train(seed: u64) -> Self {
        Self::new(Mode::Train, seed)
    }

    pub fn eval() -> Self {
        Self::new(Mode::Eval, 0)
    }

    pub fn is_train(&self) -> bool {
        self.mode == Mode::Train
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

pub trait Layer<T: Scalar>: Send + Sync {
    fn kind(&self) -> &'static str;

    fn forward(&mut self, input: &Tensor<T>, ctx: &mut Context) -> Result<Tensor<T>>;

    fn backward(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>>;

    /// Trainable tensors with their local names.
    fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        Vec::new()
    }

    /// Same tensors and order as [`Layer::parameters`].
    fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        Vec::new()
    }

    /// Non-trainable state persisted in checkpoints (e.g. running statistics).
    fn buffers(&self) -> Vec<(String, &Tensor<T>)> {
        Vec::new()
    }

    fn buffers_mut(&mut self) -> Vec<&mut Tensor<T>> {
        Vec::new()
    }

    fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|(_, p)| p.len()).sum()
    }

    fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }
}

/// Glorot/Xavier uniform initialisation: `U(-l, l)` with `l = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Scalar, R: Rng + ?Sized>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| T::of(rng.random_range(-limit..=limit))).collect();
    Tensor::from_vec(shape, data).expect("shape product matches").with_grad()
}

pub(crate) fn check_rank<T: Scalar>(
    op: &'static str,
    t: &Tensor<T>,
    rank: usize,
    expected: impl FnOnce() -> String,
) -> Result<()> {
    if t.shape().len() != rank {
        return Err(crate::NeuroError::Shape { op, expected: expected(), got: t.shape().to_vec() });
    }
    Ok(())
}
