//! Single-image super-resolution with a patch-attention encoder and
//! sine-activated feed-forward and decoding heads.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: tensors, define-by-run autodiff, Adam.
//! * [`model`]: the hybrid network, its two ablation baselines, initialization.
//! * [`metrics`]: MSE, PSNR and global SSIM.
//! * [`data`]: field normalization, RGB assembly, tiling, bicubic reduction,
//!   synthetic fields and dataset manifests.
//! * [`training`]: the optimization loop, evaluation, the frequency × depth
//!   sweep and checkpoints.
//! * [`par`]: the data-parallel map used by batch work, with a sequential path.

mod codec;
pub mod data;
pub mod error;
pub mod image;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod par;
pub mod training;

pub use error::{Error, Result};
pub use image::Image;
