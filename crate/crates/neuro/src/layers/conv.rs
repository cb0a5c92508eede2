use rand::Rng;

use super::{check_rank, glorot_uniform, Context, Layer};
use crate::error::{NeuroError, Result};
use crate::linalg::{gemm, View, ViewMut};
use crate::{Scalar, Tensor};

/// 1-D cross-correlation with zero "same" padding over `[batch, time, ch_in]`.
///
/// Padding follows the asymmetric convention for even kernels: the
/// `kernel - 1` padding cells are split with the extra cell on the right, so
/// a 2-tap kernel sees `x[t], x[t + 1]`.
pub struct Conv1d<T> {
    kernel: usize,
    weight: Tensor<T>,
    bias: Tensor<T>,
    cols: Option<(Vec<T>, Vec<usize>)>,
}

impl<T: Scalar> Conv1d<T> {
    pub fn new<R: Rng + ?Sized>(kernel: usize, ch_in: usize, ch_out: usize, rng: &mut R) -> Self {
        assert!(kernel >= 1, "kernel size must be positive");
        Self {
            kernel,
            weight: glorot_uniform(&[kernel, ch_in, ch_out], kernel * ch_in, kernel * ch_out, rng),
            bias: Tensor::zeros(&[ch_out]).with_grad(),
            cols: None,
        }
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn ch_in(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn ch_out(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn weight_mut(&mut self) -> &mut Tensor<T> {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> &mut Tensor<T> {
        &mut self.bias
    }

    fn pad_left(&self) -> usize {
        (self.kernel - 1) / 2
    }

    /// Source time index for output step `t` and tap `j`, if inside the input.
    fn source(&self, t: usize, j: usize, len: usize) -> Option<usize> {
        let s = (t + j).checked_sub(self.pad_left())?;
        (s < len).then_some(s)
    }
}

impl<T: Scalar> Layer<T> for Conv1d<T> {
    fn kind(&self) -> &'static str {
        "conv1d"
    }

    fn forward(&mut self, input: &Tensor<T>, _ctx: &mut Context) -> Result<Tensor<T>> {
        check_rank("conv1d", input, 3, || format!("[batch, time, {}]", self.ch_in()))?;
        let (batch, time, ch_in) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        if ch_in != self.ch_in() {
            return Err(NeuroError::Shape {
                op: "conv1d",
                expected: format!("[batch, time, {}]", self.ch_in()),
                got: input.shape().to_vec(),
            });
        }
        let k = self.kernel;
        let width = k * ch_in;
        let x = input.data();
        let mut cols = vec![T::zero(); batch * time * width];
        for b in 0..batch {
            for t in 0..time {
                let row = &mut cols[(b * time + t) * width..(b * time + t + 1) * width];
                for j in 0..k {
                    if let Some(s) = self.source(t, j, time) {
                        let src = &x[(b * time + s) * ch_in..(b * time + s + 1) * ch_in];
                        row[j * ch_in..(j + 1) * ch_in].copy_from_slice(src);
                    }
                }
            }
        }
        let ch_out = self.ch_out();
        let rows = batch * time;
        let mut out = Vec::with_capacity(rows * ch_out);
        for _ in 0..rows {
            out.extend_from_slice(self.bias.data());
        }
        gemm(
            T::one(),
            View::new(&cols, rows, width),
            View::new(self.weight.data(), width, ch_out),
            T::one(),
            ViewMut::new(&mut out, rows, ch_out),
        );
        self.cols = Some((cols, input.shape().to_vec()));
        Tensor::from_vec(&[batch, time, ch_out], out)
    }

    fn backward(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        let (cols, in_shape) = self.cols.as_ref().ok_or(NeuroError::NoCache("conv1d"))?;
        let (batch, time, ch_in) = (in_shape[0], in_shape[1], in_shape[2]);
        let ch_out = self.ch_out();
        let k = self.kernel;
        let width = k * ch_in;
        let rows = batch * time;
        let g = grad_output.data();
        if g.len() != rows * ch_out {
            return Err(NeuroError::Shape {
                op: "conv1d backward",
                expected: format!("[{batch}, {time}, {ch_out}]"),
                got: grad_output.shape().to_vec(),
            });
        }
        {
            let (_, wgrad) = self.weight.data_and_grad_mut();
            gemm(
                T::one(),
                View::new(cols, rows, width).t(),
                View::new(g, rows, ch_out),
                T::one(),
                ViewMut::new(wgrad, width, ch_out),
            );
        }
        {
            let (_, bgrad) = self.bias.data_and_grad_mut();
            for r in 0..rows {
                for (b, &v) in bgrad.iter_mut().zip(&g[r * ch_out..(r + 1) * ch_out]) {
                    *b += v;
                }
            }
        }
        let mut dcols = vec![T::zero(); rows * width];
        gemm(
            T::one(),
            View::new(g, rows, ch_out),
            View::new(self.weight.data(), width, ch_out).t(),
            T::zero(),
            ViewMut::new(&mut dcols, rows, width),
        );
        let mut dx = vec![T::zero(); batch * time * ch_in];
        for b in 0..batch {
            for t in 0..time {
                let row = &dcols[(b * time + t) * width..(b * time + t + 1) * width];
                for j in 0..k {
                    if let Some(s) = self.source(t, j, time) {
                        let dst = &mut dx[(b * time + s) * ch_in..(b * time + s + 1) * ch_in];
                        for (d, &v) in dst.iter_mut().zip(&row[j * ch_in..(j + 1) * ch_in]) {
                            *d += v;
                        }
                    }
                }
            }
        }
        Tensor::from_vec(in_shape, dx)
    }

    fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}
