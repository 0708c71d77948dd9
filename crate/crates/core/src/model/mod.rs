//! The hybrid super-resolution network and its ablation baselines.
//!
//! One [`VisirModel`] type covers both trained-across-dataset variants: the
//! config's [`Architecture`] picks sine heads or GELU/sigmoid heads while the
//! parameter layout stays identical, so both have the same parameter count.
//! [`SirenInr`] is the per-image coordinate network.

mod baselines;
mod config;
pub mod layers;
mod network;

pub use baselines::{siren_inr_forward, CoordGrid, InrConfig, SirenInr};
pub use config::{Architecture, DecoderMode, ModelConfig, NormOrder};
pub use network::{forward, init_parameters, parameter_count, vit_mlp_forward, BoundModel, VisirModel};
