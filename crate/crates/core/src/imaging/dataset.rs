//! Annotated patch datasets built from a single image and two masks.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::patch::{extract_patch, PatchGeometry, PatchSet, PatchVector};
use super::raster::{BinaryMask, ImageBuffer};
use crate::error::{Error, Result};

/// Class 1 is the foreground (anomaly), class 2 the background.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassLabel {
    Foreground = 1,
    Background = 2,
}

impl ClassLabel {
    pub fn index(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPatch {
    pub patch: PatchVector,
    pub label: ClassLabel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetConfig {
    pub patch_size: usize,
    /// Sampling grid step; candidate centers satisfy `x % stride == 0 && y % stride == 0`.
    pub stride: usize,
    /// Randomly under-sample the majority class to a 1:1 ratio.
    pub balance: bool,
    /// Fraction of each class's patches assigned to the training split.
    pub split_ratio: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            patch_size: 8,
            stride: 4,
            balance: true,
            split_ratio: 0.7,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<LabeledPatch>,
    pub test: Vec<LabeledPatch>,
    pub seed: u64,
    pub patch_size: usize,
    pub channels: usize,
    /// Candidate counts per class before balancing.
    pub candidates: (usize, usize),
}

impl Dataset {
    pub fn geometry(&self) -> PatchGeometry {
        PatchGeometry {
            patch_size: self.patch_size,
            channels: self.channels,
        }
    }

    pub fn train_count(&self, label: ClassLabel) -> usize {
        self.train.iter().filter(|p| p.label == label).count()
    }

    pub fn test_count(&self, label: ClassLabel) -> usize {
        self.test.iter().filter(|p| p.label == label).count()
    }

    /// Training patches of one class as matrix columns.
    pub fn train_set(&self, label: ClassLabel) -> PatchSet {
        let refs: Vec<&PatchVector> = self
            .train
            .iter()
            .filter(|p| p.label == label)
            .map(|p| &p.patch)
            .collect();
        PatchSet::from_vectors(&refs, self.geometry()).expect("dataset patches share geometry")
    }
}

fn grid_centers(mask: &BinaryMask, stride: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for y in (0..mask.height()).step_by(stride) {
        for x in (0..mask.width()).step_by(stride) {
            if mask.get(x, y) {
                out.push((x, y));
            }
        }
    }
    out
}

pub fn build_dataset(
    image: &ImageBuffer,
    fg_mask: &BinaryMask,
    bg_mask: &BinaryMask,
    cfg: &DatasetConfig,
) -> Result<Dataset> {
    let (w, h) = (image.width(), image.height());
    fg_mask.ensure_shape(w, h)?;
    bg_mask.ensure_shape(w, h)?;
    if cfg.stride == 0 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    if !(cfg.split_ratio > 0.0 && cfg.split_ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split ratio {} outside (0, 1)",
            cfg.split_ratio
        )));
    }
    if fg_mask
        .bits()
        .iter()
        .zip(bg_mask.bits())
        .any(|(a, b)| *a && *b)
    {
        return Err(Error::InvalidArgument(
            "foreground and background masks overlap".into(),
        ));
    }

    let mut fg = grid_centers(fg_mask, cfg.stride);
    let mut bg = grid_centers(bg_mask, cfg.stride);
    if fg.is_empty() {
        return Err(Error::EmptyClass(
            "no foreground patches on the sampling grid".into(),
        ));
    }
    if bg.is_empty() {
        return Err(Error::EmptyClass(
            "no background patches on the sampling grid".into(),
        ));
    }
    let candidates = (fg.len(), bg.len());

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    if cfg.balance {
        let n = fg.len().min(bg.len());
        let majority = if fg.len() > bg.len() {
            &mut fg
        } else {
            &mut bg
        };
        majority.shuffle(&mut rng);
        majority.truncate(n);
        // keep raster order inside the kept subset so the pool does not
        // depend on the under-sampling permutation beyond membership
        majority.sort_by_key(|&(x, y)| (y, x));
    }

    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (mut centers, label) in [(fg, ClassLabel::Foreground), (bg, ClassLabel::Background)] {
        centers.shuffle(&mut rng);
        let n_train = ((centers.len() as f64) * cfg.split_ratio).round() as usize;
        let n_train = n_train.clamp(1, centers.len().saturating_sub(1).max(1));
        for (i, c) in centers.into_iter().enumerate() {
            let item = LabeledPatch {
                patch: extract_patch(image, c, cfg.patch_size)?,
                label,
            };
            if i < n_train {
                train.push(item);
            } else {
                test.push(item);
            }
        }
    }
    Ok(Dataset {
        train,
        test,
        seed: cfg.seed,
        patch_size: cfg.patch_size,
        channels: image.channels(),
        candidates,
    })
}
