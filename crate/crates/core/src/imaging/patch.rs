//! Patch extraction.
//!
//! A patch of size `s` around `(x, y)` covers columns `x - (s-1)/2 ..= x + s/2`
//! (rows likewise), so for even sizes the anchor pixel is the top-left of the
//! central 2x2 block. Samples falling outside the image are mirrored with edge
//! repetition (`-1 -> 0`, `w -> w-1`). Vectors are channel-major, then
//! row-major inside each channel.

use nalgebra::DMatrix;

use super::raster::ImageBuffer;
use crate::error::{Error, Result};

/// Patch side length and channel count; `dim() = size² · channels`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGeometry {
    pub patch_size: usize,
    pub channels: usize,
}

impl PatchGeometry {
    pub fn new(patch_size: usize, channels: usize) -> Result<Self> {
        if patch_size == 0 {
            return Err(Error::InvalidArgument(
                "patch size must be at least 1".into(),
            ));
        }
        if channels == 0 {
            return Err(Error::InvalidArgument(
                "channel count must be at least 1".into(),
            ));
        }
        Ok(Self {
            patch_size,
            channels,
        })
    }

    pub fn dim(&self) -> usize {
        self.patch_size * self.patch_size * self.channels
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchVector {
    pub values: Vec<f64>,
    pub center: (usize, usize),
    pub patch_size: usize,
    pub channels: usize,
}

impl PatchVector {
    pub fn geometry(&self) -> PatchGeometry {
        PatchGeometry {
            patch_size: self.patch_size,
            channels: self.channels,
        }
    }
}

/// Patches stored as the columns of a `k x N` matrix, with their centers.
#[derive(Debug, Clone)]
pub struct PatchSet {
    pub values: DMatrix<f64>,
    pub centers: Vec<(usize, usize)>,
    pub geometry: PatchGeometry,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn from_vectors(patches: &[&PatchVector], geometry: PatchGeometry) -> Result<Self> {
        let k = geometry.dim();
        let mut values = DMatrix::zeros(k, patches.len());
        for (j, p) in patches.iter().enumerate() {
            if p.values.len() != k {
                return Err(Error::DimensionMismatch(format!(
                    "patch of length {} in a set of dimension {k}",
                    p.values.len()
                )));
            }
            values.column_mut(j).copy_from_slice(&p.values);
        }
        Ok(Self {
            values,
            centers: patches.iter().map(|p| p.center).collect(),
            geometry,
        })
    }
}

/// Symmetric (edge-repeating) reflection of `i` into `0..len`.
#[inline]
pub fn mirror_index(i: isize, len: usize) -> usize {
    let period = 2 * len as isize;
    let m = i.rem_euclid(period);
    if m >= len as isize {
        (period - 1 - m) as usize
    } else {
        m as usize
    }
}

fn fill_patch(image: &ImageBuffer, x: usize, y: usize, s: usize, out: &mut [f64]) {
    let (w, h) = (image.width(), image.height());
    let lo = (s as isize - 1) / 2;
    let mut idx = 0;
    for c in 0..image.channels() {
        let plane = image.plane(c);
        for r in 0..s {
            let yy = mirror_index(y as isize - lo + r as isize, h);
            let row = &plane[yy * w..(yy + 1) * w];
            for col in 0..s {
                let xx = x as isize - lo + col as isize;
                out[idx] = if xx >= 0 && (xx as usize) < w {
                    row[xx as usize]
                } else {
                    row[mirror_index(xx, w)]
                };
                idx += 1;
            }
        }
    }
}

pub fn extract_patch(
    image: &ImageBuffer,
    center: (usize, usize),
    patch_size: usize,
) -> Result<PatchVector> {
    let geometry = PatchGeometry::new(patch_size, image.channels())?;
    let (x, y) = center;
    if x >= image.width() || y >= image.height() {
        return Err(Error::OutOfBounds {
            x,
            y,
            width: image.width(),
            height: image.height(),
        });
    }
    let mut values = vec![0.0; geometry.dim()];
    fill_patch(image, x, y, patch_size, &mut values);
    Ok(PatchVector {
        values,
        center,
        patch_size,
        channels: image.channels(),
    })
}

/// Extracts the patches at `centers`; `None` means every pixel in row-major
/// order.
pub fn patch_set(
    image: &ImageBuffer,
    patch_size: usize,
    centers: Option<&[(usize, usize)]>,
) -> Result<PatchSet> {
    let geometry = PatchGeometry::new(patch_size, image.channels())?;
    let centers: Vec<(usize, usize)> = match centers {
        Some(c) => c.to_vec(),
        None => (0..image.height())
            .flat_map(|y| (0..image.width()).map(move |x| (x, y)))
            .collect(),
    };
    let k = geometry.dim();
    let mut values = DMatrix::zeros(k, centers.len());
    for (j, &(x, y)) in centers.iter().enumerate() {
        if x >= image.width() || y >= image.height() {
            return Err(Error::OutOfBounds {
                x,
                y,
                width: image.width(),
                height: image.height(),
            });
        }
        fill_patch(image, x, y, patch_size, values.column_mut(j).as_mut_slice());
    }
    Ok(PatchSet {
        values,
        centers,
        geometry,
    })
}
