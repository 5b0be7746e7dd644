//! Dense row-major matrices and the small vector kernels the solver needs.
//!
//! A factor matrix `X` (n x d) is stored row-major, so its buffer is exactly
//! the column stacking of `X^T`: block `i` of the flat vector is the latent
//! vector `x_i`. Edge-indexed matrices (`P`, `Lambda`) are stored the same way
//! with one row per edge.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    sqrt(norm_sq(a))
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Squared Euclidean distance between two equally sized slices.
#[inline]
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Dimension(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    /// `||self - other||_F`; shapes must agree.
    pub fn distance(&self, other: &Matrix) -> f64 {
        debug_assert_eq!(self.shape(), other.shape());
        sqrt(dist_sq(&self.data, &other.data))
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `self * other^T`, i.e. the matrix of all row inner products.
    pub fn mul_transpose(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::Dimension(format!(
                "cannot form A B^T with inner sizes {} and {}",
                self.cols, other.cols
            )));
        }
        Ok(Matrix::from_fn(self.rows, other.rows, |i, j| {
            dot(self.row(i), other.row(j))
        }))
    }
}

/// The two latent factor matrices; `x_i . y_j` predicts entry `(i, j)`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FactorPair {
    pub x: Matrix,
    pub y: Matrix,
}

impl FactorPair {
    pub fn new(x: Matrix, y: Matrix) -> Result<Self> {
        if x.cols() != y.cols() {
            return Err(Error::Dimension(format!(
                "factor ranks differ: X has {} columns, Y has {}",
                x.cols(),
                y.cols()
            )));
        }
        Ok(Self { x, y })
    }

    pub fn rank(&self) -> usize {
        self.x.cols()
    }

    #[inline]
    pub fn predict(&self, row: usize, col: usize) -> f64 {
        dot(self.x.row(row), self.y.row(col))
    }

    /// Dense reconstruction `X Y^T`.
    pub fn to_dense(&self) -> Matrix {
        Matrix::from_fn(self.x.rows(), self.y.rows(), |i, j| self.predict(i, j))
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_major_layout_is_vec_of_transpose() {
        // vec(X^T) stacks the columns of X^T, which are the rows of X.
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let xt = x.transpose();
        let mut stacked = Vec::new();
        for c in 0..xt.cols() {
            for r in 0..xt.rows() {
                stacked.push(xt.get(r, c));
            }
        }
        assert_eq!(stacked, x.as_slice());
    }

    #[test]
    fn mul_transpose_and_predict_agree() {
        let x = Matrix::from_rows(&[vec![1.0, 0.5], vec![-2.0, 1.0]]).unwrap();
        let y = Matrix::from_rows(&[vec![3.0, 2.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let f = FactorPair::new(x.clone(), y.clone()).unwrap();
        let dense = x.mul_transpose(&y).unwrap();
        assert_eq!(dense, f.to_dense());
        assert_eq!(dense.get(0, 0), 4.0);
        assert_eq!(dense.get(1, 2), -1.0);
    }

    #[test]
    fn shape_errors() {
        assert!(Matrix::from_row_major(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 2);
        assert!(a.mul_transpose(&b).is_err());
        assert!(FactorPair::new(a, b).is_err());
    }
}
