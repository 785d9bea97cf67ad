//! Manifests, images, the ToyEmotions generator and two-view augmentation.

mod augment;
mod image;
mod manifest;
mod toy;

pub use augment::{augment_pair, AugmentConfig, ColorJitter};
pub use image::{stack_batch, Image};
pub use manifest::{class_distribution, DatasetManifest, ManifestEntry};
pub use toy::{generate_toy_benchmark, Corruption, ToyBenchmark, ToyDomain, ToySpec};
