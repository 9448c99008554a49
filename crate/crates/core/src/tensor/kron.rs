//! Kronecker-product utilities.
//!
//! # vec/mat convention
//!
//! `vec`/`mat` are column-stacking: for a `rows x cols` matrix `M`, the flat
//! vector `v` satisfies `v[c * rows + r] = M[r][c]`. Applied to a layer's
//! parameters this means `mat(δ)` is `D_out x D_in` and column `j` holds the
//! parameters feeding from input `j`; the flat layout therefore iterates the
//! input index in the outer position. Every Kronecker identity in this module
//! (and the layer parameter indexing in [`crate::network`]) is pinned to this
//! convention.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

/// Dense Kronecker product `a ⊗ b`.
///
/// Entry `((i*b.rows + k), (j*b.cols + l))` equals `a(i,j) * b(k,l)`.
pub fn kron<S: Scalar>(a: &Matrix<S>, b: &Matrix<S>) -> Result<Matrix<S>> {
    let rows = a
        .rows()
        .checked_mul(b.rows())
        .ok_or_else(|| Error::structural("kron dimension overflow"))?;
    let cols = a
        .cols()
        .checked_mul(b.cols())
        .ok_or_else(|| Error::structural("kron dimension overflow"))?;
    rows.checked_mul(cols)
        .ok_or_else(|| Error::structural("kron dimension overflow"))?;
    let mut out = Matrix::zeros(rows, cols);
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let aij = a.get(i, j);
            for k in 0..b.rows() {
                for l in 0..b.cols() {
                    out.set(i * b.rows() + k, j * b.cols() + l, aij * b.get(k, l));
                }
            }
        }
    }
    Ok(out)
}

/// Reshapes a flat vector into a `rows x cols` matrix under the
/// column-stacking convention (`v[c * rows + r] = M[r][c]`).
pub fn mat<S: Scalar>(v: &[S], rows: usize, cols: usize) -> Result<Matrix<S>> {
    if v.len() != rows * cols {
        return Err(Error::structural(format!(
            "mat: vector length {} does not match {}x{}",
            v.len(),
            rows,
            cols
        )));
    }
    Ok(Matrix::from_fn(rows, cols, |r, c| v[c * rows + r]))
}

/// Flattens a matrix under the column-stacking convention; inverse of [`mat`].
pub fn vec_of<S: Scalar>(m: &Matrix<S>) -> Vec<S> {
    let mut out = Vec::with_capacity(m.rows() * m.cols());
    for c in 0..m.cols() {
        for r in 0..m.rows() {
            out.push(m.get(r, c));
        }
    }
    out
}

/// Computes `(a ⊗ b) v` without materializing the Kronecker product, as
/// `vec(b * mat(v) * aᵀ)` with `mat(v)` of shape `b.cols x a.cols`.
pub fn kron_mat_vec<S: Scalar>(a: &Matrix<S>, b: &Matrix<S>, v: &[S]) -> Result<Vec<S>> {
    if v.len() != a.cols() * b.cols() {
        return Err(Error::structural(format!(
            "kron_mat_vec: vector length {} does not match {} * {}",
            v.len(),
            a.cols(),
            b.cols()
        )));
    }
    let x = mat(v, b.cols(), a.cols())?;
    let y = b.matmul(&x).matmul_tt(false, a, true);
    Ok(vec_of(&y))
}
