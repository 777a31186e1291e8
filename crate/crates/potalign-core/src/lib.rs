//! Unsupervised joint distribution alignment for embedding classifiers.
//!
//! Aligns a labeled source domain with an unlabeled target domain by
//! minimizing a cross-entropy loss plus an optimal-transport adaptation
//! loss over latent features and class posteriors. The partial-transport
//! variant multiplies each coupling entry by a soft admissibility weight
//! (a sigmoid of the thresholded transport cost) so that source classes
//! absent from the target stop attracting target mass.
//!
//! The crate is `no_std` + `alloc`: all float math goes through `libm`,
//! so results are bit-reproducible across platforms. File formats and the
//! command-line surface live in the companion `potalign` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod mat;
pub(crate) mod math;
pub mod metrics;
pub mod model;
pub mod ot;
pub mod pca;
pub mod pot;
pub mod trainer;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

/// The RNG used for every seeded operation (synthetic data, mini-batch
/// sampling, weight init). ChaCha8 is stable across platforms and rand
/// versions are pinned by the lockfile, so equal seeds give equal bytes.
pub type RngState = rand_chacha::ChaCha8Rng;
