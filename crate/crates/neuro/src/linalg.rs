//! Checked matrix products over row-major slices.

use crate::Scalar;

/// A strided view of an `rows x cols` matrix stored in a slice.
#[derive(Clone, Copy, Debug)]
pub struct View<'a, T> {
    pub data: &'a [T],
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a, T> View<'a, T> {
    /// Dense row-major matrix.
    pub fn new(data: &'a [T], rows: usize, cols: usize) -> Self {
        Self { data, rows, cols, row_stride: cols, col_stride: 1 }
    }

    /// Column block `[col0, col0 + cols)` of a row-major matrix whose rows are
    /// `width` long.
    pub fn block(data: &'a [T], rows: usize, width: usize, col0: usize, cols: usize) -> Self {
        Self { data: &data[col0..], rows, cols, row_stride: width, col_stride: 1 }
    }

    /// Transposed view (no copy).
    pub fn t(self) -> Self {
        Self {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
        }
    }

    fn last_index(&self) -> Option<usize> {
        if self.rows == 0 || self.cols == 0 {
            return None;
        }
        Some((self.rows - 1) * self.row_stride + (self.cols - 1) * self.col_stride)
    }
}

/// Mutable counterpart of [`View`].
#[derive(Debug)]
pub struct ViewMut<'a, T> {
    pub data: &'a mut [T],
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a, T> ViewMut<'a, T> {
    pub fn new(data: &'a mut [T], rows: usize, cols: usize) -> Self {
        Self { data, rows, cols, row_stride: cols, col_stride: 1 }
    }

    pub fn block(data: &'a mut [T], rows: usize, width: usize, col0: usize, cols: usize) -> Self {
        Self { data: &mut data[col0..], rows, cols, row_stride: width, col_stride: 1 }
    }
}

/// `c <- alpha * a * b + beta * c`.
///
/// Panics on inconsistent shapes or out-of-bounds views; shape validation of
/// user input happens in the layers before reaching here.
pub fn gemm<T: Scalar>(alpha: T, a: View<'_, T>, b: View<'_, T>, beta: T, c: ViewMut<'_, T>) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension");
    assert_eq!(a.rows, c.rows, "gemm output rows");
    assert_eq!(b.cols, c.cols, "gemm output cols");
    if c.rows == 0 || c.cols == 0 {
        return;
    }
    if a.cols == 0 {
        // Empty inner dimension: the product is zero.
        for i in 0..c.rows {
            for j in 0..c.cols {
                let idx = i * c.row_stride + j * c.col_stride;
                c.data[idx] = beta * c.data[idx];
            }
        }
        return;
    }
    assert!(a.last_index().is_none_or(|i| i < a.data.len()), "gemm lhs out of bounds");
    assert!(b.last_index().is_none_or(|i| i < b.data.len()), "gemm rhs out of bounds");
    let c_last = (c.rows - 1) * c.row_stride + (c.cols - 1) * c.col_stride;
    assert!(c_last < c.data.len(), "gemm output out of bounds");
    // SAFETY: all three views were bounds-checked above.
    unsafe {
        T::gemm_unchecked(
            a.rows,
            a.cols,
            b.cols,
            alpha,
            a.data.as_ptr(),
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr(),
            b.row_stride as isize,
            b.col_stride as isize,
            beta,
            c.data.as_mut_ptr(),
            c.row_stride as isize,
            c.col_stride as isize,
        );
    }
}

/// Dense `a[m,k] * b[k,n]` into a fresh buffer.
pub fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    gemm(T::one(), View::new(a, m, k), View::new(b, k, n), T::zero(), ViewMut::new(&mut out, m, n));
    out
}
