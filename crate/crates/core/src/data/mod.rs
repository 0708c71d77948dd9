//! Dataset construction: physical fields to unit-interval RGB, tiling,
//! bicubic reduction, synthetic sources, file formats and manifests.

mod bicubic;
mod dataset;
mod field;
pub mod io;
mod synth;
mod tiling;

pub use bicubic::{bicubic_downsample, cubic_kernel};
pub use dataset::{
    assign_splits, build_dataset, build_pairs, DatasetConfig, DatasetManifest, PairEntry, SRPair, SourceRanges,
    SourceSpec, Split, MANIFEST_FILE, MANIFEST_VERSION,
};
pub use field::{assemble_rgb, normalize_field, split_channels, FieldGrid, NormRange};
pub use synth::{mix_seed, synth_field, synth_source, Background, SpectralComponent, SpectrumSpec};
pub use tiling::{tile_image, untile};
