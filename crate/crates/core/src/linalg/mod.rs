//! Sparse symmetric matrices, direct and iterative solvers, small dense kernels.

mod dense;
mod ldlt;
mod minres;
mod sparse;

pub use dense::{fd_weights, least_squares, least_squares_rcond, symmetric_eigen};
pub use ldlt::{rcm_ordering, Ldlt};
pub use minres::{minres, MinresOutcome};
pub use sparse::SparseSymmetricMatrix;

use crate::scalar::Real;

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub(crate) fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}
