use super::{Context, Layer};
use crate::error::{NeuroError, Result};
use crate::{Scalar, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Normalizes each position over its feature (last) axis, then applies a
/// learned affine map.
pub struct LayerNorm<T> {
    gamma: Tensor<T>,
    beta: Tensor<T>,
    eps: T,
    cache: Option<(Vec<T>, Vec<T>, Vec<usize>)>,
}

impl<T: Scalar> LayerNorm<T> {
    pub fn new(features: usize) -> Self {
        Self {
            gamma: Tensor::full(&[features], T::one()).with_grad(),
            beta: Tensor::zeros(&[features]).with_grad(),
            eps: T::of(LAYER_NORM_EPS),
            cache: None,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    pub fn gamma_mut(&mut self) -> &mut Tensor<T> {
        &mut self.gamma
    }

    pub fn beta_mut(&mut self) -> &mut Tensor<T> {
        &mut self.beta
    }
}

impl<T: Scalar> Layer<T> for LayerNorm<T> {
    fn kind(&self) -> &'static str {
        "layer_norm"
    }

    fn forward(&mut self, input: &Tensor<T>, _ctx: &mut Context) -> Result<Tensor<T>> {
        let (_, d) = input.rows_cols();
        if input.shape().is_empty() || d != self.features() {
            return Err(NeuroError::Shape {
                op: "layer_norm",
                expected: format!("[.., {}]", self.features()),
                got: input.shape().to_vec(),
            });
        }
        let n = T::of(d as f64);
        let mut xhat = Vec::with_capacity(input.len());
        let mut inv = Vec::with_capacity(input.len() / d.max(1));
        let mut out = Vec::with_capacity(input.len());
        let (gamma, beta) = (self.gamma.data(), self.beta.data());
        for row in input.data().chunks(d) {
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let inv_std = T::one() / (var + self.eps).sqrt();
            inv.push(inv_std);
            for c in 0..d {
                let h = (row[c] - mean) * inv_std;
                xhat.push(h);
                out.push(gamma[c] * h + beta[c]);
            }
        }
        self.cache = Some((xhat, inv, input.shape().to_vec()));
        Tensor::from_vec(input.shape(), out)
    }

    fn backward(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        let (xhat, inv, shape) = self.cache.as_ref().ok_or(NeuroError::NoCache("layer_norm"))?;
        let d = self.features();
        let g = grad_output.data();
        if g.len() != xhat.len() {
            return Err(NeuroError::Shape {
                op: "layer_norm backward",
                expected: format!("{shape:?}"),
                got: grad_output.shape().to_vec(),
            });
        }
        let n = T::of(d as f64);
        let gamma = self.gamma.data().to_vec();
        let mut dgamma = vec![T::zero(); d];
        let mut dbeta = vec![T::zero(); d];
        let mut dx = Vec::with_capacity(g.len());
        for ((gr, xr), &inv_std) in g.chunks(d).zip(xhat.chunks(d)).zip(inv) {
            let mut sum_dh = T::zero();
            let mut sum_dh_x = T::zero();
            for c in 0..d {
                dgamma[c] += gr[c] * xr[c];
                dbeta[c] += gr[c];
                let dh = gr[c] * gamma[c];
                sum_dh += dh;
                sum_dh_x += dh * xr[c];
            }
            for c in 0..d {
                let dh = gr[c] * gamma[c];
                dx.push(inv_std / n * (n * dh - sum_dh - xr[c] * sum_dh_x));
            }
        }
        self.gamma.accumulate_grad(&dgamma);
        self.beta.accumulate_grad(&dbeta);
        Tensor::from_vec(shape, dx)
    }

    fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        vec![("gamma".into(), &self.gamma), ("beta".into(), &self.beta)]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }
}
