//! Symmetric eigendecomposition via the cyclic Jacobi method.
//!
//! Layer factor matrices in this crate stay small (a few hundred rows), so a
//! plain Jacobi iteration is accurate and fast enough without pulling in an
//! external linear-algebra backend.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

/// Eigendecomposition of a symmetric matrix: `m = Q diag(λ) Qᵀ` with
/// eigenvalues ascending and orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct SymEig<S> {
    pub eigenvalues: Vec<S>,
    pub eigenvectors: Matrix<S>,
}

impl<S: Scalar> SymEig<S> {
    /// Reconstructs `Q diag(λ) Qᵀ`.
    pub fn reconstruct(&self) -> Matrix<S> {
        let n = self.eigenvalues.len();
        let q = &self.eigenvectors;
        let mut scaled = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                scaled.set(i, j, q.get(i, j) * self.eigenvalues[j]);
            }
        }
        scaled.matmul_tt(false, q, true)
    }
}

/// Maximum asymmetry tolerated before the input is rejected.
const SYMMETRY_TOL: f64 = 1e-10;

/// Symmetric eigendecomposition.
///
/// The input must be square and symmetric to within `1e-10` max-abs. Failure
/// to converge reports the matrix dimension.
pub fn sym_eig<S: Scalar>(m: &Matrix<S>) -> Result<SymEig<S>> {
    if !m.is_square() {
        return Err(Error::structural(format!(
            "sym_eig requires a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    if n == 0 {
        return Err(Error::structural("sym_eig requires a non-empty matrix"));
    }
    let scale = m.max_abs().max(S::one());
    if m.asymmetry() > S::cast(SYMMETRY_TOL) * scale {
        return Err(Error::structural(format!(
            "sym_eig requires a symmetric matrix (asymmetry {:e})",
            m.asymmetry().to_f64_lossy()
        )));
    }

    let mut a = m.clone();
    // Exact symmetrization so rotations preserve symmetry bit-for-bit.
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = (a.get(i, j) + a.get(j, i)) * S::cast(0.5);
            a.set(i, j, avg);
            a.set(j, i, avg);
        }
    }
    let mut q = Matrix::identity(n);

    let off_tol = S::cast(1e-14) * scale;
    let max_sweeps = 64;
    let mut converged = false;
    for _ in 0..max_sweeps {
        let mut off = S::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(a.get(i, j).abs());
            }
        }
        if off <= off_tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                let apr = a.get(p, r);
                if apr.abs() <= off_tol {
                    continue;
                }
                let app = a.get(p, p);
                let arr = a.get(r, r);
                let tau = (arr - app) / (S::cast(2.0) * apr);
                let t = {
                    let sign = if tau >= S::zero() { S::one() } else { -S::one() };
                    sign / (tau.abs() + (S::one() + tau * tau).sqrt())
                };
                let c = S::one() / (S::one() + t * t).sqrt();
                let s = t * c;

                // Rotate rows/columns p and r of A.
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akr = a.get(k, r);
                    a.set(k, p, c * akp - s * akr);
                    a.set(k, r, s * akp + c * akr);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let ark = a.get(r, k);
                    a.set(p, k, c * apk - s * ark);
                    a.set(r, k, s * apk + c * ark);
                }
                // Accumulate the rotation into Q.
                for k in 0..n {
                    let qkp = q.get(k, p);
                    let qkr = q.get(k, r);
                    q.set(k, p, c * qkp - s * qkr);
                    q.set(k, r, s * qkp + c * qkr);
                }
            }
        }
    }
    if !converged {
        // One last check: the sweep loop may have converged on its final pass.
        let mut off = S::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(a.get(i, j).abs());
            }
        }
        if off > off_tol {
            return Err(Error::numerical(format!(
                "Jacobi eigendecomposition failed to converge for {n}x{n} matrix"
            )));
        }
    }

    // Sort eigenvalues ascending, permuting eigenvector columns to match.
    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<S> = (0..n).map(|i| a.get(i, i)).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).expect("finite eigenvalues"));
    let eigenvalues: Vec<S> = order.iter().map(|&i| diag[i]).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for k in 0..n {
            eigenvectors.set(k, new_col, q.get(k, old_col));
        }
    }

    Ok(SymEig {
        eigenvalues,
        eigenvectors,
    })
}
