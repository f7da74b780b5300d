//! Compact bilinear pooling.
//!
//! Second-order (bilinear) pooling sums the outer products of local
//! descriptors over a spatial grid, producing a `c * c` global descriptor.
//! This crate provides the exact pooling as a ground-truth oracle together
//! with two compact approximations of length `d`:
//!
//! * [`rm`]: Random Maclaurin projection, `(W1 x) * (W2 x) / sqrt(d)` with
//!   Rademacher matrices.
//! * [`ts`]: Tensor Sketch, the circular convolution of two Count Sketches.
//!
//! Both layers come with analytic backward passes. The [`postproc`] module
//! holds the signed square root and l2 normalization layers, the
//! l2-regularized logistic regression classifier, and few-shot evaluation.

pub mod bilinear;
pub mod error;
pub mod io;
pub mod postproc;
pub mod rm;
pub mod rng;
pub mod sketch;
pub mod tensor;
pub mod ts;

pub use error::{Error, Result};
pub use rng::SeededRng;
pub use tensor::{LocalDescriptorGrid, Matrix, PoolKind, PooledDescriptor};

#[cfg(test)]
pub(crate) mod testutil;
