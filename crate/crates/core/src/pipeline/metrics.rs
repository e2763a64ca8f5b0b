use crate::error::{Error, Result};
use crate::imaging::BinaryMask;

/// Sizes of the 4-connected foreground components, with a per-pixel label
/// (`usize::MAX` for background).
fn components(mask: &BinaryMask) -> (Vec<usize>, Vec<usize>) {
    let (w, h) = (mask.width(), mask.height());
    let bits = mask.bits();
    let mut label = vec![usize::MAX; w * h];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !bits[start] || label[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut size = 0;
        label[start] = id;
        stack.push(start);
        while let Some(n) = stack.pop() {
            size += 1;
            let (x, y) = (n % w, n / w);
            let mut visit = |m: usize| {
                if bits[m] && label[m] == usize::MAX {
                    label[m] = id;
                    stack.push(m);
                }
            };
            if x > 0 {
                visit(n - 1);
            }
            if x + 1 < w {
                visit(n + 1);
            }
            if y > 0 {
                visit(n - w);
            }
            if y + 1 < h {
                visit(n + w);
            }
        }
        sizes.push(size);
    }
    (label, sizes)
}

/// Drops 4-connected foreground components smaller than `min_area` pixels.
pub fn post_process(mask: &BinaryMask, min_area: usize) -> BinaryMask {
    if min_area == 0 {
        return mask.clone();
    }
    let (label, sizes) = components(mask);
    let bits = label
        .iter()
        .map(|&l| l != usize::MAX && sizes[l] >= min_area)
        .collect();
    BinaryMask::new(mask.width(), mask.height(), bits).expect("shape is unchanged")
}

/// `|a ∩ b| / |a ∪ b|`, and 1 when both masks are empty.
pub fn compute_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch(format!(
            "masks {}x{} and {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &q) in a.bits().iter().zip(b.bits()) {
        inter += (p && q) as usize;
        union += (p || q) as usize;
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}
