//! Losses and evaluation metrics for the two model heads.

use crate::error::{NeuroError, Result};
use crate::layers::softmax_in_place;
use crate::{Scalar, Tensor};

/// Lower bound applied to probabilities before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

fn check_classes<T: Scalar>(probs: &Tensor<T>, classes: &[usize]) -> Result<(usize, usize)> {
    let (rows, n_classes) = probs.rows_cols();
    if probs.shape().len() != 2 || rows != classes.len() {
        return Err(NeuroError::Shape {
            op: "sparse categorical",
            expected: format!("[{}, n_classes]", classes.len()),
            got: probs.shape().to_vec(),
        });
    }
    if let Some(&class) = classes.iter().find(|&&c| c >= n_classes) {
        return Err(NeuroError::ClassOutOfRange { class, n_classes });
    }
    Ok((rows, n_classes))
}

/// Sparse categorical cross-entropy, `mean(-ln p[class])`, on probabilities.
pub fn scce<T: Scalar>(probs: &Tensor<T>, classes: &[usize]) -> Result<T> {
    let (rows, n) = check_classes(probs, classes)?;
    if rows == 0 {
        return Ok(T::zero());
    }
    let floor = T::of(LOG_FLOOR);
    let total: T = classes
        .iter()
        .enumerate()
        .map(|(i, &c)| -probs.data()[i * n + c].max(floor).ln())
        .sum();
    Ok(total / T::of(rows as f64))
}

/// Softmax + sparse categorical cross-entropy fused, returning the loss,
/// the probabilities and the gradient with respect to the logits.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    classes: &[usize],
) -> Result<(T, Tensor<T>, Tensor<T>)> {
    let (rows, n) = check_classes(logits, classes)?;
    let mut probs = logits.clone();
    for row in probs.data_mut().chunks_mut(n.max(1)) {
        softmax_in_place(row);
    }
    let loss = scce(&probs, classes)?;
    let mut grad = probs.clone();
    let inv = T::one() / T::of(rows.max(1) as f64);
    for (i, &c) in classes.iter().enumerate() {
        grad.data_mut()[i * n + c] -= T::one();
    }
    grad.data_mut().iter_mut().for_each(|g| *g *= inv);
    Ok((loss, probs, grad))
}

fn check_pair<T>(pred: &[T], target: &[T]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(NeuroError::Shape {
            op: "regression metric",
            expected: format!("{} predictions", target.len()),
            got: vec![pred.len()],
        });
    }
    Ok(())
}

/// Mean squared error.
pub fn mse<T: Scalar>(pred: &[T], target: &[T]) -> Result<T> {
    check_pair(pred, target)?;
    if pred.is_empty() {
        return Ok(T::zero());
    }
    let sum: T = pred.iter().zip(target).map(|(&p, &y)| (p - y) * (p - y)).sum();
    Ok(sum / T::of(pred.len() as f64))
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse_with_grad<T: Scalar>(pred: &[T], target: &[T]) -> Result<(T, Vec<T>)> {
    let loss = mse(pred, target)?;
    let scale = T::of(2.0 / pred.len().max(1) as f64);
    let grad = pred.iter().zip(target).map(|(&p, &y)| scale * (p - y)).collect();
    Ok((loss, grad))
}

/// Mean absolute percentage error with the count of samples skipped because
/// their target is zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mape<T> {
    /// `None` when every target was zero.
    pub value: Option<T>,
    pub excluded: usize,
}

pub fn mape<T: Scalar>(pred: &[T], target: &[T]) -> Result<Mape<T>> {
    check_pair(pred, target)?;
    let mut sum = T::zero();
    let mut used = 0usize;
    for (&p, &y) in pred.iter().zip(target) {
        if y == T::zero() {
            continue;
        }
        sum += ((p - y) / y).abs();
        used += 1;
    }
    let value = (used > 0).then(|| sum / T::of(used as f64) * T::of(100.0));
    Ok(Mape { value, excluded: pred.len() - used })
}

/// Index of the largest entry; the first one wins on ties.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose argmax equals the class label.
pub fn sparse_accuracy<T: Scalar>(probs: &Tensor<T>, classes: &[usize]) -> Result<T> {
    let (rows, n) = check_classes(probs, classes)?;
    if rows == 0 {
        return Ok(T::zero());
    }
    let hits = probs
        .data()
        .chunks(n)
        .zip(classes)
        .filter(|(row, &c)| argmax(row) == c)
        .count();
    Ok(T::of(hits as f64 / rows as f64))
}
