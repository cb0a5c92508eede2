//! Minimal differentiable-computation substrate.
//!
//! Tensors are dense row-major arrays; layers implement explicit forward and
//! backward passes (see [`layers::Layer`]); [`optim::RAdam`] updates the
//! parameters. Everything is generic over the [`Scalar`] element type, with
//! `f64` aliases for the common case.

pub mod checkpoint;
pub mod gradcheck;
mod error;
pub mod layers;
pub mod linalg;
pub mod loss;
pub mod optim;
mod scalar;
mod tensor;

pub use error::{NeuroError, Result};
pub use layers::{Context, Layer, Mode};
pub use optim::{OptimizerState, RAdam, RAdamConfig};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type RAdam64 = RAdam<f64>;
