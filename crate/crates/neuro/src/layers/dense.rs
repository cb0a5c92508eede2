use rand::Rng;

use super::{glorot_uniform, Context, Layer};
use crate::error::{NeuroError, Result};
use crate::linalg::{gemm, View, ViewMut};
use crate::{Scalar, Tensor};

/// Fully connected layer applied to the last axis: `[.., in] -> [.., out]`.
pub struct Dense<T> {
    weight: Tensor<T>,
    bias: Tensor<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Dense<T> {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            weight: glorot_uniform(&[inputs, outputs], inputs, outputs, rng),
            bias: Tensor::zeros(&[outputs]).with_grad(),
            input: None,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn weight_mut(&mut self) -> &mut Tensor<T> {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> &mut Tensor<T> {
        &mut self.bias
    }
}

impl<T: Scalar> Layer<T> for Dense<T> {
    fn kind(&self) -> &'static str {
        "dense"
    }

    fn forward(&mut self, input: &Tensor<T>, _ctx: &mut Context) -> Result<Tensor<T>> {
        let (rows, cols) = input.rows_cols();
        if input.shape().is_empty() || cols != self.inputs() {
            return Err(NeuroError::Shape {
                op: "dense",
                expected: format!("[.., {}]", self.inputs()),
                got: input.shape().to_vec(),
            });
        }
        let out_dim = self.outputs();
        let mut out = Vec::with_capacity(rows * out_dim);
        for _ in 0..rows {
            out.extend_from_slice(self.bias.data());
        }
        gemm(
            T::one(),
            View::new(input.data(), rows, cols),
            View::new(self.weight.data(), cols, out_dim),
            T::one(),
            ViewMut::new(&mut out, rows, out_dim),
        );
        let mut shape = input.shape().to_vec();
        *shape.last_mut().unwrap() = out_dim;
        self.input = Some(input.clone());
        Tensor::from_vec(&shape, out)
    }

    fn backward(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        let input = self.input.as_ref().ok_or(NeuroError::NoCache("dense"))?;
        let (rows, cols) = input.rows_cols();
        let out_dim = self.outputs();
        let g = grad_output.data();
        if g.len() != rows * out_dim {
            return Err(NeuroError::Shape {
                op: "dense backward",
                expected: format!("{} x {}", rows, out_dim),
                got: grad_output.shape().to_vec(),
            });
        }
        {
            let (_, wgrad) = self.weight.data_and_grad_mut();
            gemm(
                T::one(),
                View::new(input.data(), rows, cols).t(),
                View::new(g, rows, out_dim),
                T::one(),
                ViewMut::new(wgrad, cols, out_dim),
            );
        }
        {
            let (_, bgrad) = self.bias.data_and_grad_mut();
            for r in 0..rows {
                for (b, &v) in bgrad.iter_mut().zip(&g[r * out_dim..(r + 1) * out_dim]) {
                    *b += v;
                }
            }
        }
        let mut dx = vec![T::zero(); rows * cols];
        gemm(
            T::one(),
            View::new(g, rows, out_dim),
            View::new(self.weight.data(), cols, out_dim).t(),
            T::zero(),
            ViewMut::new(&mut dx, rows, cols),
        );
        Tensor::from_vec(input.shape(), dx)
    }

    fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}
