use rand::Rng;

use super::activation::{softmax_backward_row, softmax_in_place};
use super::{check_rank, Context, Dense, Layer};
use crate::error::{NeuroError, Result};
use crate::linalg::{gemm, View, ViewMut};
use crate::{Scalar, Tensor};

/// Multi-head scaled dot-product self-attention over `[batch, time, model_dim]`.
///
/// Each head projects the input to queries, keys and values of width
/// `head_size`, computes `softmax(Q K^T / sqrt(head_size)) V`, and the
/// concatenated heads are projected back to `model_dim`.
pub struct MultiHeadAttention<T> {
    heads: usize,
    head_size: usize,
    query: Dense<T>,
    key: Dense<T>,
    value: Dense<T>,
    output: Dense<T>,
    cache: Option<Cache<T>>,
}

struct Cache<T> {
    batch: usize,
    time: usize,
    q: Tensor<T>,
    k: Tensor<T>,
    v: Tensor<T>,
    /// `[batch, heads, time, time]` attention weights.
    weights: Vec<T>,
}

impl<T: Scalar> MultiHeadAttention<T> {
    pub fn new<R: Rng + ?Sized>(model_dim: usize, heads: usize, head_size: usize, rng: &mut R) -> Self {
        assert!(heads >= 1 && head_size >= 1, "attention needs at least one head of positive size");
        let inner = heads * head_size;
        Self {
            heads,
            head_size,
            query: Dense::new(model_dim, inner, rng),
            key: Dense::new(model_dim, inner, rng),
            value: Dense::new(model_dim, inner, rng),
            output: Dense::new(inner, model_dim, rng),
            cache: None,
        }
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn head_size(&self) -> usize {
        self.head_size
    }

    pub fn model_dim(&self) -> usize {
        self.query.inputs()
    }

    /// Weights of the last forward pass, laid out `[batch, heads, query, key]`.
    pub fn attention_weights(&self) -> Option<&[T]> {
        self.cache.as_ref().map(|c| c.weights.as_slice())
    }

    pub fn query_mut(&mut self) -> &mut Dense<T> {
        &mut self.query
    }

    pub fn key_mut(&mut self) -> &mut Dense<T> {
        &mut self.key
    }

    pub fn value_mut(&mut self) -> &mut Dense<T> {
        &mut self.value
    }

    pub fn output_mut(&mut self) -> &mut Dense<T> {
        &mut self.output
    }

    fn inner(&self) -> usize {
        self.heads * self.head_size
    }
}

impl<T: Scalar> Layer<T> for MultiHeadAttention<T> {
    fn kind(&self) -> &'static str {
        "multi_head_attention"
    }

    fn forward(&mut self, input: &Tensor<T>, ctx: &mut Context) -> Result<Tensor<T>> {
        check_rank("multi_head_attention", input, 3, || {
            format!("[batch, time, {}]", self.model_dim())
        })?;
        let (batch, time, dim) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        if dim != self.model_dim() {
            return Err(NeuroError::Shape {
                op: "multi_head_attention",
                expected: format!("[batch, time, {}]", self.model_dim()),
                got: input.shape().to_vec(),
            });
        }
        if time == 0 {
            return Err(NeuroError::EmptyAxis { op: "multi_head_attention" });
        }
        let q = self.query.forward(input, ctx)?;
        let k = self.key.forward(input, ctx)?;
        let v = self.value.forward(input, ctx)?;
        let (heads, size, inner) = (self.heads, self.head_size, self.inner());
        let scale = T::one() / T::of(size as f64).sqrt();
        let mut weights = vec![T::zero(); batch * heads * time * time];
        let mut context = vec![T::zero(); batch * time * inner];
        let block = time * inner;
        for b in 0..batch {
            let (qb, kb, vb) = (
                &q.data()[b * block..(b + 1) * block],
                &k.data()[b * block..(b + 1) * block],
                &v.data()[b * block..(b + 1) * block],
            );
            for h in 0..heads {
                let w = &mut weights[(b * heads + h) * time * time..(b * heads + h + 1) * time * time];
                gemm(
                    scale,
                    View::block(qb, time, inner, h * size, size),
                    View::block(kb, time, inner, h * size, size).t(),
                    T::zero(),
                    ViewMut::new(w, time, time),
                );
                for row in w.chunks_mut(time) {
                    softmax_in_place(row);
                }
                gemm(
                    T::one(),
                    View::new(w, time, time),
                    View::block(vb, time, inner, h * size, size),
                    T::zero(),
                    ViewMut::block(&mut context[b * block..(b + 1) * block], time, inner, h * size, size),
                );
            }
        }
        let context = Tensor::from_vec(&[batch, time, inner], context)?;
        let out = self.output.forward(&context, ctx)?;
        self.cache = Some(Cache { batch, time, q, k, v, weights });
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        let d_context = self.output.backward(grad_output)?;
        let cache = self.cache.as_ref().ok_or(NeuroError::NoCache("multi_head_attention"))?;
        let (batch, time) = (cache.batch, cache.time);
        let (heads, size, inner) = (self.heads, self.head_size, self.inner());
        let scale = T::one() / T::of(size as f64).sqrt();
        let block = time * inner;
        let mut dq = vec![T::zero(); batch * block];
        let mut dk = vec![T::zero(); batch * block];
        let mut dv = vec![T::zero(); batch * block];
        let mut d_weights = vec![T::zero(); time * time];
        let mut d_scores = vec![T::zero(); time * time];
        for b in 0..batch {
            let range = b * block..(b + 1) * block;
            let (qb, kb, vb) = (&cache.q.data()[range.clone()], &cache.k.data()[range.clone()], &cache.v.data()[range.clone()]);
            let gb = &d_context.data()[range.clone()];
            for h in 0..heads {
                let w = &cache.weights[(b * heads + h) * time * time..(b * heads + h + 1) * time * time];
                let g_head = View::block(gb, time, inner, h * size, size);
                // dA = dO V^T ; dV = A^T dO
                gemm(
                    T::one(),
                    g_head,
                    View::block(vb, time, inner, h * size, size).t(),
                    T::zero(),
                    ViewMut::new(&mut d_weights, time, time),
                );
                gemm(
                    T::one(),
                    View::new(w, time, time).t(),
                    g_head,
                    T::one(),
                    ViewMut::block(&mut dv[range.clone()], time, inner, h * size, size),
                );
                for ((wr, gr), sr) in w
                    .chunks(time)
                    .zip(d_weights.chunks(time))
                    .zip(d_scores.chunks_mut(time))
                {
                    softmax_backward_row(wr, gr, sr);
                }
                // scores = scale * Q K^T
                gemm(
                    scale,
                    View::new(&d_scores, time, time),
                    View::block(kb, time, inner, h * size, size),
                    T::one(),
                    ViewMut::block(&mut dq[range.clone()], time, inner, h * size, size),
                );
                gemm(
                    scale,
                    View::new(&d_scores, time, time).t(),
                    View::block(qb, time, inner, h * size, size),
                    T::one(),
                    ViewMut::block(&mut dk[range.clone()], time, inner, h * size, size),
                );
            }
        }
        let shape = [batch, time, inner];
        let mut dx = self.query.backward(&Tensor::from_vec(&shape, dq)?)?;
        let dx_k = self.key.backward(&Tensor::from_vec(&shape, dk)?)?;
        let dx_v = self.value.backward(&Tensor::from_vec(&shape, dv)?)?;
        for ((a, &b), &c) in dx.data_mut().iter_mut().zip(dx_k.data()).zip(dx_v.data()) {
            *a += b + c;
        }
        Ok(dx)
    }

    fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (prefix, layer) in
            [("query", &self.query), ("key", &self.key), ("value", &self.value), ("output", &self.output)]
        {
            for (name, p) in layer.parameters() {
                out.push((format!("{prefix}.{name}"), p));
            }
        }
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = self.query.parameters_mut();
        out.extend(self.key.parameters_mut());
        out.extend(self.value.parameters_mut());
        out.extend(self.output.parameters_mut());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mha(dim: usize, heads: usize, size: usize) -> MultiHeadAttention<f64> {
        MultiHeadAttention::new(dim, heads, size, &mut ChaCha8Rng::seed_from_u64(3))
    }

    #[test]
    fn single_token_attends_to_itself() {
        let mut a = mha(4, 2, 3);
        let x = Tensor::from_vec(&[1, 1, 4], vec![0.3, -1.0, 2.0, 0.5]).unwrap();
        let y = a.forward(&x, &mut Context::eval()).unwrap();
        assert!(a.attention_weights().unwrap().iter().all(|&w| (w - 1.0).abs() < 1e-15));
        // output = Wo (Wv x + bv) + bo
        let mut ctx = Context::eval();
        let v = a.value.forward(&x, &mut ctx).unwrap();
        let want = a.output.forward(&v, &mut ctx).unwrap();
        for (p, q) in y.data().iter().zip(want.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_query_key_weights_give_uniform_attention() {
        let mut a = mha(3, 2, 2);
        for t in a.query.parameters_mut().into_iter().chain(a.key.parameters_mut()) {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let x = Tensor::from_vec(&[2, 4, 3], (0..24).map(|i| i as f64 * 0.1).collect()).unwrap();
        a.forward(&x, &mut Context::eval()).unwrap();
        assert!(a.attention_weights().unwrap().iter().all(|&w| (w - 0.25).abs() < 1e-15));
    }

    #[test]
    fn two_step_single_head_by_hand() {
        // model_dim 1, one head of size 1, all projections identity, no bias.
        let mut a = mha(1, 1, 1);
        for d in [&mut a.query, &mut a.key, &mut a.value, &mut a.output] {
            d.weight_mut().data_mut()[0] = 1.0;
            d.bias_mut().data_mut()[0] = 0.0;
        }
        let x = Tensor::from_vec(&[1, 2, 1], vec![1.0, 2.0]).unwrap();
        let y = a.forward(&x, &mut Context::eval()).unwrap();
        // scores row t: [x_t * 1, x_t * 2]; output = softmax(row) . [1, 2]
        let want: Vec<f64> = [1.0f64, 2.0]
            .iter()
            .map(|&xt| {
                let (e1, e2) = ((xt * 1.0).exp(), (xt * 2.0).exp());
                (e1 * 1.0 + e2 * 2.0) / (e1 + e2)
            })
            .collect();
        for (p, q) in y.data().iter().zip(&want) {
            assert!((p - q).abs() < 1e-12, "{p} vs {q}");
        }
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let mut a = mha(4, 3, 2);
        let x = Tensor::from_vec(&[2, 5, 4], (0..40).map(|i| ((i * 13) % 7) as f64 - 3.0).collect()).unwrap();
        a.forward(&x, &mut Context::eval()).unwrap();
        for row in a.attention_weights().unwrap().chunks(5) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn wrong_width_is_rejected() {
        let mut a = mha(4, 2, 2);
        assert!(a.forward(&Tensor::zeros(&[1, 3, 5]), &mut Context::eval()).is_err());
    }
}
