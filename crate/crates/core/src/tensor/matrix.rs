//! Row-major dense matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A dense real matrix stored in row-major order: entry `(i, j)` lives at
/// `data[i * cols + j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    /// Builds a matrix from row-major data; the length must be `rows * cols`.
    pub fn new(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::structural(format!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, S::one());
        }
        m
    }

    /// Builds a matrix by evaluating `f(i, j)` at every entry.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn diag(entries: &[S]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &e) in entries.iter().enumerate() {
            m.set(i, i, e);
        }
        m
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
    pub fn get(&self, i: usize, j: usize) -> S {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: S) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn data(&self) -> &[S] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [S] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn extract_diag(&self) -> Vec<S> {
        let n = self.rows.min(self.cols);
        (0..n).map(|i| self.get(i, i)).collect()
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Self) -> Self {
        self.matmul_tt(false, other, false)
    }

    /// Matrix product with optional transposition of either operand.
    ///
    /// `ta`/`tb` select `Aᵀ`/`Bᵀ` without copying; the kernel runs on strided
    /// views of the original buffers.
    pub fn matmul_tt(&self, ta: bool, other: &Self, tb: bool) -> Self {
        let (m, ka) = if ta {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        };
        let (kb, n) = if tb {
            (other.cols, other.rows)
        } else {
            (other.rows, other.cols)
        };
        assert_eq!(
            ka, kb,
            "matmul inner dimension mismatch: {}x{} ({}) vs {}x{} ({})",
            self.rows, self.cols, ta, other.rows, other.cols, tb
        );
        let mut out = Self::zeros(m, n);
        let (rsa, csa) = if ta {
            (1isize, self.cols as isize)
        } else {
            (self.cols as isize, 1isize)
        };
        let (rsb, csb) = if tb {
            (1isize, other.cols as isize)
        } else {
            (other.cols as isize, 1isize)
        };
        if m == 0 || n == 0 || ka == 0 {
            return out;
        }
        S::gemm(
            m,
            ka,
            n,
            S::one(),
            &self.data,
            rsa,
            csa,
            &other.data,
            rsb,
            csb,
            S::zero(),
            out.data_mut(),
        );
        out
    }

    /// `self * v` for a column vector `v`.
    pub fn matvec(&self, v: &[S]) -> Vec<S> {
        assert_eq!(v.len(), self.cols, "matvec dimension mismatch");
        let mut out = vec![S::zero(); self.rows];
        for i in 0..self.rows {
            let row = self.row(i);
            let mut acc = S::zero();
            for j in 0..self.cols {
                acc += row[j] * v[j];
            }
            out[i] = acc;
        }
        out
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, a: S) -> Self {
        self.map(|x| x * a)
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + b)
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a - b)
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// Elementwise (Hadamard) product.
    pub fn hadamard(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn frobenius_norm(&self) -> S {
        self.data.iter().map(|&x| x * x).sum::<S>().sqrt()
    }

    pub fn max_abs(&self) -> S {
        self.data
            .iter()
            .fold(S::zero(), |acc, &x| acc.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> S {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(S::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Largest absolute asymmetry `max |a_ij - a_ji|`.
    pub fn asymmetry(&self) -> S {
        assert!(self.is_square());
        let mut worst = S::zero();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Sum over rows: returns a `cols`-length vector of column sums.
    pub fn col_sums(&self) -> Vec<S> {
        let mut out = vec![S::zero(); self.cols];
        for i in 0..self.rows {
            for (j, o) in out.iter_mut().enumerate() {
                *o += self.get(i, j);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_wrong_length() {
        assert!(Matrix::<f64>::new(2, 3, vec![0.0; 5]).is_err());
    }

    #[test]
    fn matmul_matches_loop() {
        let a = Matrix::from_fn(3, 4, |i, j| (i * 7 + j) as f64 * 0.25 - 1.0);
        let b = Matrix::from_fn(4, 2, |i, j| (i + 3 * j) as f64 * 0.5);
        let c = a.matmul(&b);
        for i in 0..3 {
            for j in 0..2 {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += a.get(i, k) * b.get(k, j);
                }
                assert!((c.get(i, j) - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transposed_matmul_views_match_explicit_transpose() {
        let a = Matrix::from_fn(3, 5, |i, j| (i as f64 - 1.5) * (j as f64 + 0.5));
        let b = Matrix::from_fn(3, 2, |i, j| 1.0 / (1.0 + i as f64 + j as f64));
        let via_view = a.matmul_tt(true, &b, false);
        let via_copy = a.transpose().matmul(&b);
        assert!(via_view.max_abs_diff(&via_copy) < 1e-14);

        let c = Matrix::from_fn(2, 5, |i, j| (i * 5 + j) as f64 * 0.1);
        let via_view = a.matmul_tt(false, &c, true);
        let via_copy = a.matmul(&c.transpose());
        assert!(via_view.max_abs_diff(&via_copy) < 1e-14);
    }

    #[test]
    fn matvec_f32_works() {
        let a = Matrix::<f32>::from_fn(2, 2, |i, j| (i + j) as f32);
        assert_eq!(a.matvec(&[1.0, 2.0]), vec![2.0, 5.0]);
    }
}
