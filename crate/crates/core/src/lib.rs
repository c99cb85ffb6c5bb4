//! Tumor shape morphometry for segmented brain MRI.
//!
//! The crate covers everything around a segmentation network: volume and
//! manifest I/O, intensity preprocessing, training-set planning, mask
//! post-processing, shape features (ASD, BEVR, MF), segmentation evaluation
//! and the radiogenomic association tests.

pub mod error;
pub mod evaluation;
pub mod fsutil;
pub mod manifest;
pub mod phantoms;
pub mod pipeline;
pub mod postprocess;
pub mod preprocess;
pub mod quantile;
pub mod radiogenomics;
pub mod seed;
pub mod shape;
pub mod tables;
pub mod trainprep;
pub mod volume;

pub use error::{Error, Result};
pub use manifest::{load_manifest, CaseManifest, CaseRecord, Sequence};
pub use volume::{load_slice_stack, load_volume, write_volume, Slice2D, VolumeKind, VoxelVolume};
