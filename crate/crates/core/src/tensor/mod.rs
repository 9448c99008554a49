//! Dense matrix arithmetic, symmetric eigendecomposition, Kronecker-product
//! utilities, and seeded pseudorandom generation.

mod eig;
mod kron;
mod matrix;
mod rng;

pub use eig::{sym_eig, SymEig};
pub use kron::{kron, kron_mat_vec, mat, vec_of};
pub use matrix::Matrix;
pub use rng::Rng;
