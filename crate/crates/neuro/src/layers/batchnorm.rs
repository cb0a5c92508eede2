use super::{Context, Layer};
use crate::error::{NeuroError, Result};
use crate::{Scalar, Tensor};

pub const BATCH_NORM_MOMENTUM: f64 = 0.9;
pub const BATCH_NORM_EPS: f64 = 1e-5;

/// Batch normalization over the channel (last) axis. Statistics are taken
/// over every leading position, i.e. over `(batch, time)` for sequences.
pub struct BatchNorm1d<T> {
    gamma: Tensor<T>,
    beta: Tensor<T>,
    running_mean: Tensor<T>,
    running_var: Tensor<T>,
    momentum: T,
    eps: T,
    cache: Option<Cache<T>>,
}

struct Cache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    shape: Vec<usize>,
    batch_stats: bool,
}

impl<T: Scalar> BatchNorm1d<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::full(&[channels], T::one()).with_grad(),
            beta: Tensor::zeros(&[channels]).with_grad(),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            momentum: T::of(BATCH_NORM_MOMENTUM),
            eps: T::of(BATCH_NORM_EPS),
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn gamma_mut(&mut self) -> &mut Tensor<T> {
        &mut self.gamma
    }

    pub fn beta_mut(&mut self) -> &mut Tensor<T> {
        &mut self.beta
    }

    pub fn running_mean(&self) -> &Tensor<T> {
        &self.running_mean
    }

    pub fn running_var(&self) -> &Tensor<T> {
        &self.running_var
    }

    pub fn running_mean_mut(&mut self) -> &mut Tensor<T> {
        &mut self.running_mean
    }

    pub fn running_var_mut(&mut self) -> &mut Tensor<T> {
        &mut self.running_var
    }
}

impl<T: Scalar> Layer<T> for BatchNorm1d<T> {
    fn kind(&self) -> &'static str {
        "batchnorm1d"
    }

    fn forward(&mut self, input: &Tensor<T>, ctx: &mut Context) -> Result<Tensor<T>> {
        let (rows, ch) = input.rows_cols();
        if input.shape().len() < 2 || ch != self.channels() {
            return Err(NeuroError::Shape {
                op: "batchnorm1d",
                expected: format!("[batch, .., {}]", self.channels()),
                got: input.shape().to_vec(),
            });
        }
        let x = input.data();
        let batch_stats = ctx.is_train();
        let (mean, var) = if batch_stats {
            let batch = input.shape()[0];
            if batch < 2 {
                return Err(NeuroError::BatchTooSmall(batch));
            }
            let m = T::of(rows as f64);
            let mut mean = vec![T::zero(); ch];
            for row in x.chunks(ch) {
                for (acc, &v) in mean.iter_mut().zip(row) {
                    *acc += v;
                }
            }
            mean.iter_mut().for_each(|v| *v /= m);
            let mut var = vec![T::zero(); ch];
            for row in x.chunks(ch) {
                for ((acc, &v), &mu) in var.iter_mut().zip(row).zip(&mean) {
                    *acc += (v - mu) * (v - mu);
                }
            }
            var.iter_mut().for_each(|v| *v /= m);
            let mom = self.momentum;
            let one = T::one();
            for c in 0..ch {
                let rm = &mut self.running_mean.data_mut()[c];
                *rm = mom * *rm + (one - mom) * mean[c];
                let rv = &mut self.running_var.data_mut()[c];
                *rv = mom * *rv + (one - mom) * var[c];
            }
            (mean, var)
        } else {
            (self.running_mean.data().to_vec(), self.running_var.data().to_vec())
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + self.eps).sqrt()).collect();
        let mut xhat = Vec::with_capacity(x.len());
        let mut out = Vec::with_capacity(x.len());
        let (gamma, beta) = (self.gamma.data(), self.beta.data());
        for row in x.chunks(ch) {
            for c in 0..ch {
                let h = (row[c] - mean[c]) * inv_std[c];
                xhat.push(h);
                out.push(gamma[c] * h + beta[c]);
            }
        }
        self.cache = Some(Cache { xhat, inv_std, shape: input.shape().to_vec(), batch_stats });
        Tensor::from_vec(input.shape(), out)
    }

    fn backward(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.as_ref().ok_or(NeuroError::NoCache("batchnorm1d"))?;
        let ch = self.channels();
        let g = grad_output.data();
        if g.len() != cache.xhat.len() {
            return Err(NeuroError::Shape {
                op: "batchnorm1d backward",
                expected: format!("{:?}", cache.shape),
                got: grad_output.shape().to_vec(),
            });
        }
        let rows = g.len() / ch;
        let mut sum_g = vec![T::zero(); ch];
        let mut sum_gx = vec![T::zero(); ch];
        for (gr, xr) in g.chunks(ch).zip(cache.xhat.chunks(ch)) {
            for c in 0..ch {
                sum_g[c] += gr[c];
                sum_gx[c] += gr[c] * xr[c];
            }
        }
        self.beta.accumulate_grad(&sum_g);
        self.gamma.accumulate_grad(&sum_gx);
        let gamma = self.gamma.data();
        let mut dx = Vec::with_capacity(g.len());
        if cache.batch_stats {
            let m = T::of(rows as f64);
            for (gr, xr) in g.chunks(ch).zip(cache.xhat.chunks(ch)) {
                for c in 0..ch {
                    // dxhat = g * gamma; sums of dxhat are gamma * sum_g etc.
                    let v = gamma[c] * cache.inv_std[c] / m
                        * (m * gr[c] - sum_g[c] - xr[c] * sum_gx[c]);
                    dx.push(v);
                }
            }
        } else {
            for gr in g.chunks(ch) {
                for c in 0..ch {
                    dx.push(gr[c] * gamma[c] * cache.inv_std[c]);
                }
            }
        }
        Tensor::from_vec(&cache.shape, dx)
    }

    fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        vec![("gamma".into(), &self.gamma), ("beta".into(), &self.beta)]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn buffers(&self) -> Vec<(String, &Tensor<T>)> {
        vec![("running_mean".into(), &self.running_mean), ("running_var".into(), &self.running_var)]
    }

    fn buffers_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.running_mean, &mut self.running_var]
    }
}
