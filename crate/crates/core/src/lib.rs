//! Training and sparsification of fully-connected networks driven by the
//! Laplace-approximated marginal likelihood.
//!
//! The crate covers the full pipeline:
//!
//! * [`tensor`] — dense matrices, symmetric eigendecomposition, Kronecker
//!   utilities, and a seeded portable random generator.
//! * [`network`] — feed-forward networks with flat parameter indexing and
//!   explicit forward/backward passes.
//! * [`likelihood`] — categorical and Gaussian losses with output-space
//!   gradients, Hessians, and square-root factors.
//! * [`prior`] — scalar, layer-wise, unit-wise, and parameter-wise Gaussian
//!   prior precisions with log-space hyperparameters.
//! * [`curvature`] — diagonal GGN / empirical-Fisher and Kronecker-factored
//!   curvature estimates.
//! * [`laplace`] — posterior precision assembly, log marginal likelihood, and
//!   its gradients with respect to the prior precisions.
//! * [`training`] — MAP, marglik (SpaM), online-pruning, L1, and fine-tuning
//!   loops.
//! * [`pruning`] — importance scores (OPD, magnitude, SNIP, GraSP, SynFlow,
//!   random), thresholding, and mask application.
//! * [`compaction`] — turning structured masks into genuinely smaller dense
//!   networks plus cost accounting.
//! * [`metrics`] — accuracy, NLL, ECE, and Brier evaluation.
//! * [`data`] — MNIST IDX and CSV loaders, synthetic generators, batching.
//! * [`io`] — checkpoint, posterior-snapshot, and mask file formats.
//!
//! All numeric code is generic over the scalar type through [`scalar::Scalar`]
//! (implemented for `f32` and `f64`); the concrete aliases below pin the
//! double-precision instantiations used by the CLI and the file formats.

pub mod curvature;
pub mod data;
pub mod error;
pub mod likelihood;
pub mod network;
pub mod prior;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision matrix, the workhorse type of the CLI pipeline.
/// Double-precision matrix, the workhorse type of the CLI pipeline.
pub type Matrix64 = tensor::Matrix<f64>;
/// Single-precision matrix.
pub type Matrix32 = tensor::Matrix<f32>;
