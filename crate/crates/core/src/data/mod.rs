//! Manifests, image decoding, augmentation and the synthetic dataset generator.

pub mod augment;
mod dataset;
pub mod image;
pub mod manifest;
pub mod synth;

pub use augment::{
    epoch_plan, materialize, AugmentKind, AugmentationSpec, SampleRef, MULTIPLICITY,
};
pub use dataset::{Dataset, SampleBatch, INPUT_CHANNELS};
pub use image::{load_image, load_luminance, Gray, Normalization};
pub use manifest::{load_manifest, Label, ManifestEntry, Split};
pub use synth::make_synthetic_dataset;
