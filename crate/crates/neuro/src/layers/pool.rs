use super::{check_rank, Context, Layer};
use crate::error::{NeuroError, Result};
use crate::{Scalar, Tensor};

/// Non-overlapping max pooling along time, `[b, t, c] -> [b, t / window, c]`.
/// A trailing partial window is dropped.
pub struct MaxPool1d {
    window: usize,
    argmax: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool1d {
    pub fn new(window: usize) -> Self {
        assert!(window >= 1, "pool window must be positive");
        Self { window, argmax: None }
    }
}

impl<T: Scalar> Layer<T> for MaxPool1d {
    fn kind(&self) -> &'static str {
        "maxpool1d"
    }

    fn forward(&mut self, input: &Tensor<T>, _ctx: &mut Context) -> Result<Tensor<T>> {
        check_rank("maxpool1d", input, 3, || "[batch, time, channels]".into())?;
        let (batch, time, ch) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let steps = time / self.window;
        if steps == 0 {
            return Err(NeuroError::EmptyAxis { op: "maxpool1d" });
        }
        let x = input.data();
        let mut out = Vec::with_capacity(batch * steps * ch);
        let mut idx = Vec::with_capacity(batch * steps * ch);
        for b in 0..batch {
            for s in 0..steps {
                for c in 0..ch {
                    let mut best = (b * time + s * self.window) * ch + c;
                    for w in 1..self.window {
                        let i = (b * time + s * self.window + w) * ch + c;
                        if x[i] > x[best] {
                            best = i;
                        }
                    }
                    out.push(x[best]);
                    idx.push(best);
                }
            }
        }
        self.argmax = Some((idx, input.shape().to_vec()));
        Tensor::from_vec(&[batch, steps, ch], out)
    }

    fn backward(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        let (idx, shape) = self.argmax.as_ref().ok_or(NeuroError::NoCache("maxpool1d"))?;
        scatter(idx, shape, grad_output, "maxpool1d backward")
    }
}

/// Max over the whole time axis, `[b, t, c] -> [b, c]`.
#[derive(Default)]
pub struct GlobalMaxPool1d {
    argmax: Option<(Vec<usize>, Vec<usize>)>,
}

impl GlobalMaxPool1d {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Scalar> Layer<T> for GlobalMaxPool1d {
    fn kind(&self) -> &'static str {
        "global_maxpool1d"
    }

    fn forward(&mut self, input: &Tensor<T>, _ctx: &mut Context) -> Result<Tensor<T>> {
        check_rank("global_maxpool1d", input, 3, || "[batch, time, channels]".into())?;
        let (batch, time, ch) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        if time == 0 {
            return Err(NeuroError::EmptyAxis { op: "global_maxpool1d" });
        }
        let x = input.data();
        let mut out = Vec::with_capacity(batch * ch);
        let mut idx = Vec::with_capacity(batch * ch);
        for b in 0..batch {
            for c in 0..ch {
                let mut best = b * time * ch + c;
                for t in 1..time {
                    let i = (b * time + t) * ch + c;
                    if x[i] > x[best] {
                        best = i;
                    }
                }
                out.push(x[best]);
                idx.push(best);
            }
        }
        self.argmax = Some((idx, input.shape().to_vec()));
        Tensor::from_vec(&[batch, ch], out)
    }

    fn backward(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        let (idx, shape) = self.argmax.as_ref().ok_or(NeuroError::NoCache("global_maxpool1d"))?;
        scatter(idx, shape, grad_output, "global_maxpool1d backward")
    }
}

fn scatter<T: Scalar>(
    idx: &[usize],
    shape: &[usize],
    grad_output: &Tensor<T>,
    op: &'static str,
) -> Result<Tensor<T>> {
    if grad_output.len() != idx.len() {
        return Err(NeuroError::Shape {
            op,
            expected: format!("{} elements", idx.len()),
            got: grad_output.shape().to_vec(),
        });
    }
    let mut dx = Tensor::zeros(shape);
    let d = dx.data_mut();
    for (&i, &g) in idx.iter().zip(grad_output.data()) {
        d[i] += g;
    }
    Ok(dx)
}

/// `[b, ...] -> [b, prod(...)]`.
#[derive(Default)]
pub struct Flatten {
    shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Scalar> Layer<T> for Flatten {
    fn kind(&self) -> &'static str {
        "flatten"
    }

    fn forward(&mut self, input: &Tensor<T>, _ctx: &mut Context) -> Result<Tensor<T>> {
        let batch = *input.shape().first().ok_or(NeuroError::Shape {
            op: "flatten",
            expected: "[batch, ..]".into(),
            got: vec![],
        })?;
        let rest = input.shape()[1..].iter().product();
        self.shape = Some(input.shape().to_vec());
        input.clone().reshape(&[batch, rest])
    }

    fn backward(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self.shape.as_ref().ok_or(NeuroError::NoCache("flatten"))?;
        grad_output.clone().reshape(shape)
    }
}
