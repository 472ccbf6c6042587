//! Image loading, preprocessing and patch extraction, plus the synthetic
//! subspace generator used for verification.

mod image;
mod patches;
pub mod synth;

pub use self::image::{
    downsample, encode_png16, load_image, to_grayscale, ImageBuffer, RegionMask,
};
pub use patches::{
    build_training_set, crop, derive_seed, devectorize_patch, extract_grid_patches,
    extract_random_patches, patches_to_matrix, subtract_patch_mean, valid_positions, vectorize_patch, Patch,
    PatchBatch,
};
pub use synth::{synth_generate, SynthData, SynthSpec};
