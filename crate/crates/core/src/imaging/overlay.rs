use super::raster::{BinaryMask, ImageBuffer};
use crate::error::{Error, Result};

pub const OVERLAY_COLOR: [f64; 3] = [1.0, 1.0, 0.0];

/// Mask pixels with at least one 4-neighbour that is false or off-image.
pub fn inner_boundary(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    BinaryMask::from_fn(w, h, |x, y| {
        if !mask.get(x, y) {
            return false;
        }
        let off = |dx: isize, dy: isize| {
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            nx < 0
                || ny < 0
                || nx >= w as isize
                || ny >= h as isize
                || !mask.get(nx as usize, ny as usize)
        };
        off(-1, 0) || off(1, 0) || off(0, -1) || off(0, 1)
    })
}

/// Paints the mask's inner boundary yellow on an RGB copy of `image`.
pub fn render_overlay(image: &ImageBuffer, mask: &BinaryMask) -> Result<ImageBuffer> {
    if !mask.same_shape(image.width(), image.height()) {
        return Err(Error::DimensionMismatch(format!(
            "overlay mask {}x{} on a {}x{} image",
            mask.width(),
            mask.height(),
            image.width(),
            image.height()
        )));
    }
    let mut out = image.to_rgb();
    let edge = inner_boundary(mask);
    for y in 0..image.height() {
        for x in 0..image.width() {
            if edge.get(x, y) {
                for (c, v) in OVERLAY_COLOR.iter().enumerate() {
                    out.set(x, y, c, *v);
                }
            }
        }
    }
    Ok(out)
}
