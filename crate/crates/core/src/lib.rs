//! Multi-view subspace clustering via t-SVD tensor multi-rank minimization.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: third-order tensors, block-circulant operators, t-product,
//!   mode-3 Fourier transform and the coefficient-tensor rotation.
//! - [`tsvd`]: t-SVD, multi-rank, tensor nuclear norm and tubal shrinkage.
//! - [`solver`]: the ADMM solver over per-view self-representations.
//! - [`baselines`]: single-view LRR, naive multi-view LRR, Gaussian spectral
//!   baseline and the unrotated tensor variant.
//! - [`spectral`]: affinity fusion and normalized spectral clustering.
//! - [`metrics`]: NMI, ACC, adjusted Rand, F-score, precision and recall.
//! - [`io`]: dataset files, the synthetic generator and JSON reports.

pub mod baselines;
pub mod error;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod solver;
pub mod spectral;
pub mod tensor;
pub mod tsvd;

pub use error::{Error, Result};
pub use tensor::{ComplexTensor3, Matrix, Tensor3};
