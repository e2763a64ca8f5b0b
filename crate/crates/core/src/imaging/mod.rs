//! Rasters, masks and everything that turns pixels into patch vectors.

mod color;
mod dataset;
mod overlay;
mod patch;
mod raster;

pub use color::{lab_a_channel, srgb_to_lab};
pub use dataset::{build_dataset, ClassLabel, Dataset, DatasetConfig, LabeledPatch};
pub use overlay::{inner_boundary, render_overlay, OVERLAY_COLOR};
pub use patch::{extract_patch, mirror_index, patch_set, PatchGeometry, PatchSet, PatchVector};
pub use raster::{BinaryMask, ImageBuffer};
