//! Beauty-conditioned face generation at desk scale: rated-image corpora,
//! per-rater predictors, a conditional progressive GAN, latent inversion,
//! and realism metrics.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cgan;
pub mod dataset;
pub mod error;
pub mod imageio;
pub mod inversion;
pub mod metrics;
pub mod nn;
pub mod raters;
pub mod scalar;
pub mod stats;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::{Dual, Scalar};
pub use tensor::Tensor;

/// Pixel grids as used at the I/O boundary.
pub type Image = Tensor<f32>;
/// Single-precision checkpoint, the training default.
pub type Checkpoint = cgan::GanCheckpoint<f32>;
/// Double-precision checkpoint, for gradient checks.
pub type Checkpoint64 = cgan::GanCheckpoint<f64>;
pub type DualF32 = Dual<f32>;
pub type DualF64 = Dual<f64>;
