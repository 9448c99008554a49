//! Negative log-likelihood losses with output-space gradients, Hessians, and
//! square-root Hessian factors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Matrix, Rng};

/// Observation target for one sample.
#[derive(Debug, Clone, PartialEq)]
pub enum Target<S> {
    Class(usize),
    Values(Vec<S>),
}

/// Observation model at the network output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Likelihood<S> {
    /// Softmax cross-entropy over class logits.
    Categorical,
    /// Isotropic Gaussian with fixed noise variance `sigma2`.
    Gaussian { sigma2: S },
}

impl<S: Scalar> Likelihood<S> {
    pub fn gaussian(sigma2: S) -> Result<Self> {
        if sigma2 <= S::zero() || !sigma2.is_finite() {
            return Err(Error::structural("gaussian likelihood needs sigma2 > 0"));
        }
        Ok(Likelihood::Gaussian { sigma2 })
    }

    fn check_target(&self, f: &[S], y: &Target<S>) -> Result<()> {
        match (self, y) {
            (Likelihood::Categorical, Target::Class(c)) => {
                if *c >= f.len() {
                    return Err(Error::structural(format!(
                        "class label {c} out of range for {} outputs",
                        f.len()
                    )));
                }
            }
            (Likelihood::Gaussian { .. }, Target::Values(v)) => {
                if v.len() != f.len() {
                    return Err(Error::structural("target dimension mismatch"));
                }
            }
            _ => return Err(Error::structural("target kind does not match likelihood")),
        }
        Ok(())
    }

    /// Negative log likelihood of one sample.
    pub fn nll(&self, f: &[S], y: &Target<S>) -> Result<S> {
        self.check_target(f, y)?;
        match (self, y) {
            (Likelihood::Categorical, Target::Class(c)) => Ok(log_sum_exp(f) - f[*c]),
            (Likelihood::Gaussian { sigma2 }, Target::Values(v)) => {
                let half = S::cast(0.5);
                let sq = f
                    .iter()
                    .zip(v)
                    .map(|(&fi, &yi)| (yi - fi) * (yi - fi))
                    .sum::<S>();
                let d = S::cast(f.len() as f64);
                let two_pi = S::cast(std::f64::consts::TAU);
                Ok(half * sq / *sigma2 + half * d * (two_pi * *sigma2).ln())
            }
            _ => unreachable!(),
        }
    }

    /// Gradient of the NLL w.r.t. the outputs `f`.
    pub fn output_grad(&self, f: &[S], y: &Target<S>) -> Result<Vec<S>> {
        self.check_target(f, y)?;
        match (self, y) {
            (Likelihood::Categorical, Target::Class(c)) => {
                let mut p = softmax(f);
                p[*c] -= S::one();
                Ok(p)
            }
            (Likelihood::Gaussian { sigma2 }, Target::Values(v)) => Ok(f
                .iter()
                .zip(v)
                .map(|(&fi, &yi)| (fi - yi) / *sigma2)
                .collect()),
            _ => unreachable!(),
        }
    }

    /// Hessian of the NLL w.r.t. the outputs.
    ///
    /// Categorical: `diag(p) - p pᵀ` (independent of the label).
    /// Gaussian: `I / sigma2`.
    pub fn output_hessian(&self, f: &[S], y: &Target<S>) -> Result<Matrix<S>> {
        self.check_target(f, y)?;
        match self {
            Likelihood::Categorical => {
                let p = softmax(f);
                let c = f.len();
                let mut h = Matrix::zeros(c, c);
                for i in 0..c {
                    for j in 0..c {
                        let v = if i == j {
                            p[i] - p[i] * p[j]
                        } else {
                            -(p[i] * p[j])
                        };
                        h.set(i, j, v);
                    }
                }
                Ok(h)
            }
            Likelihood::Gaussian { sigma2 } => {
                Ok(Matrix::identity(f.len()).scale(S::one() / *sigma2))
            }
        }
    }

    /// Square-root factor `L` with `L Lᵀ = output_hessian`, via a PSD
    /// Cholesky with pivot tolerance and an eigenvalue-clipping fallback.
    pub fn hessian_factor(&self, f: &[S], y: &Target<S>) -> Result<Matrix<S>> {
        match self {
            Likelihood::Gaussian { sigma2 } => {
                self.check_target(f, y)?;
                Ok(Matrix::identity(f.len()).scale((S::one() / *sigma2).sqrt()))
            }
            Likelihood::Categorical => {
                let h = self.output_hessian(f, y)?;
                psd_sqrt_factor(&h)
            }
        }
    }

    /// Samples a target from the model distribution at outputs `f`.
    pub fn sample_target(&self, f: &[S], rng: &mut Rng) -> Target<S> {
        match self {
            Likelihood::Categorical => {
                let p = softmax(f);
                let u = S::cast(rng.uniform());
                let mut acc = S::zero();
                for (c, &pc) in p.iter().enumerate() {
                    acc += pc;
                    if u < acc {
                        return Target::Class(c);
                    }
                }
                Target::Class(p.len() - 1)
            }
            Likelihood::Gaussian { sigma2 } => {
                let sd = sigma2.sqrt();
                Target::Values(
                    f.iter()
                        .map(|&fi| fi + sd * S::cast(rng.normal()))
                        .collect(),
                )
            }
        }
    }
}

/// Numerically stable `log Σ exp(f_i)`.
pub fn log_sum_exp<S: Scalar>(f: &[S]) -> S {
    let m = f.iter().fold(S::neg_infinity(), |a, &b| a.max(b));
    if !m.is_finite() {
        return m;
    }
    let s = f.iter().map(|&x| (x - m).exp()).sum::<S>();
    m + s.ln()
}

/// Softmax probabilities with log-sum-exp stabilization.
pub fn softmax<S: Scalar>(f: &[S]) -> Vec<S> {
    let lse = log_sum_exp(f);
    f.iter().map(|&x| (x - lse).exp()).collect()
}

const CHOLESKY_PIVOT_TOL: f64 = 1e-12;

/// Factor of a PSD matrix: plain Cholesky with zeroed columns at tiny pivots,
/// falling back to `Q sqrt(clip(λ, 0))` when the reconstruction is off.
fn psd_sqrt_factor<S: Scalar>(h: &Matrix<S>) -> Result<Matrix<S>> {
    let n = h.rows();
    let scale = h.max_abs().max(S::one());
    let tol = S::cast(CHOLESKY_PIVOT_TOL) * scale;
    let mut l = Matrix::zeros(n, n);
    let mut ok = true;
    for j in 0..n {
        let mut d = h.get(j, j);
        for k in 0..j {
            d = d - l.get(j, k) * l.get(j, k);
        }
        if d <= tol {
            if d < -tol {
                ok = false;
                break;
            }
            // Zero pivot: for PSD input the whole column vanishes.
            continue;
        }
        let djj = d.sqrt();
        l.set(j, j, djj);
        for i in (j + 1)..n {
            let mut v = h.get(i, j);
            for k in 0..j {
                v = v - l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, v / djj);
        }
    }
    if ok {
        let rec = l.matmul_tt(false, &l, true);
        if rec.max_abs_diff(h) <= S::cast(1e-10) * scale {
            return Ok(l);
        }
    }
    // Eigenvalue clipping fallback.
    let eig = crate::tensor::sym_eig(h)?;
    if eig
        .eigenvalues
        .iter()
        .any(|&lam| lam < -S::cast(1e-8) * scale)
    {
        return Err(Error::numerical(
            "hessian_factor requires a positive semidefinite Hessian",
        ));
    }
    let q = &eig.eigenvectors;
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let lam = eig.eigenvalues[j].max(S::zero());
            l.set(i, j, q.get(i, j) * lam.sqrt());
        }
    }
    Ok(l)
}
