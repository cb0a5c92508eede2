use rand::Rng;

use super::{Context, Layer};
use crate::error::{NeuroError, Result};
use crate::{Scalar, Tensor};

/// `max(0, x)`.
#[derive(Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }
}

pub fn relu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

impl<T: Scalar> Layer<T> for Relu {
    fn kind(&self) -> &'static str {
        "relu"
    }

    fn forward(&mut self, input: &Tensor<T>, _ctx: &mut Context) -> Result<Tensor<T>> {
        self.mask = Some(input.data().iter().map(|&v| v > T::zero()).collect());
        Ok(input.map(relu))
    }

    fn backward(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        let mask = self.mask.as_ref().ok_or(NeuroError::NoCache("relu"))?;
        let data = grad_output
            .data()
            .iter()
            .zip(mask)
            .map(|(&g, &m)| if m { g } else { T::zero() })
            .collect();
        Tensor::from_vec(grad_output.shape(), data)
    }
}

/// Numerically stable softmax of one row, in place.
pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Softmax over the last axis.
pub struct Softmax<T> {
    output: Option<Tensor<T>>,
}

impl<T> Default for Softmax<T> {
    fn default() -> Self {
        Self { output: None }
    }
}

impl<T> Softmax<T> {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Softmax backward for one row: `dx = y * (g - <g, y>)`.
pub(crate) fn softmax_backward_row<T: Scalar>(y: &[T], g: &[T], dx: &mut [T]) {
    let dot: T = y.iter().zip(g).map(|(&a, &b)| a * b).sum();
    for ((d, &yi), &gi) in dx.iter_mut().zip(y).zip(g) {
        *d = yi * (gi - dot);
    }
}

impl<T: Scalar> Layer<T> for Softmax<T> {
    fn kind(&self) -> &'static str {
        "softmax"
    }

    fn forward(&mut self, input: &Tensor<T>, _ctx: &mut Context) -> Result<Tensor<T>> {
        let (_, cols) = input.rows_cols();
        let mut out = input.clone();
        if cols > 0 {
            for row in out.data_mut().chunks_mut(cols) {
                softmax_in_place(row);
            }
        }
        self.output = Some(out.clone());
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.output.as_ref().ok_or(NeuroError::NoCache("softmax"))?;
        let (_, cols) = y.rows_cols();
        let mut dx = Tensor::zeros(y.shape());
        if cols > 0 {
            for ((yr, gr), dr) in y
                .data()
                .chunks(cols)
                .zip(grad_output.data().chunks(cols))
                .zip(dx.data_mut().chunks_mut(cols))
            {
                softmax_backward_row(yr, gr, dr);
            }
        }
        Ok(dx)
    }
}

/// Inverted dropout: in train mode each unit is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`; identity in eval mode.
pub struct Dropout {
    rate: f64,
    mask: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(rate: f64) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        Self { rate, mask: None }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

impl<T: Scalar> Layer<T> for Dropout {
    fn kind(&self) -> &'static str {
        "dropout"
    }

    fn forward(&mut self, input: &Tensor<T>, ctx: &mut Context) -> Result<Tensor<T>> {
        if !ctx.is_train() || self.rate == 0.0 {
            self.mask = None;
            return Ok(input.clone());
        }
        let keep = 1.0 - self.rate;
        let scale = 1.0 / keep;
        let rng = ctx.rng();
        let mask: Vec<f64> = (0..input.len())
            .map(|_| if rng.random::<f64>() < keep { scale } else { 0.0 })
            .collect();
        let data = input.data().iter().zip(&mask).map(|(&v, &m)| v * T::of(m)).collect();
        self.mask = Some(mask);
        Tensor::from_vec(input.shape(), data)
    }

    fn backward(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        match &self.mask {
            None => Ok(grad_output.clone()),
            Some(mask) => {
                let data =
                    grad_output.data().iter().zip(mask).map(|(&g, &m)| g * T::of(m)).collect();
                Tensor::from_vec(grad_output.shape(), data)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_piecewise() {
        assert_eq!(relu(-2.0f64), 0.0);
        assert_eq!(relu(3.0f64), 3.0);
        assert_eq!(relu(0.0f64), 0.0);
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut s = Softmax::<f64>::new();
        let y = s.forward(&Tensor::<f64>::zeros(&[1, 2]), &mut Context::eval()).unwrap();
        assert_eq!(y.data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_handles_large_logits() {
        let mut row = [1000.0f64, 0.0, -1000.0];
        softmax_in_place(&mut row);
        assert!(row.iter().all(|v| v.is_finite()));
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dropout_eval_is_identity() {
        let mut d = Dropout::new(0.2);
        let x = Tensor::<f64>::from_vec(&[1, 3], vec![1.0, -2.0, 3.0]).unwrap();
        assert_eq!(d.forward(&x, &mut Context::eval()).unwrap(), x);
    }

    #[test]
    fn dropout_train_is_seeded_and_scaled() {
        let mut d = Dropout::new(0.5);
        let x = Tensor::<f64>::full(&[1, 64], 1.0);
        let a = d.forward(&x, &mut Context::train(7)).unwrap();
        let b = d.forward(&x, &mut Context::train(7)).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|&v| v == 0.0 || v == 2.0));
        assert!(a.data().contains(&0.0));
    }
}
