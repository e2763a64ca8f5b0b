//! sRGB to CIE 1976 L*a*b* (D65), used by the a*-channel Chan-Vese baseline.

use super::raster::ImageBuffer;
use crate::error::{Error, Result};

const WHITE_D65: [f64; 3] = [0.95047, 1.0, 1.08883];

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// Converts one sRGB triple in `[0, 1]` to `[L*, a*, b*]`.
pub fn srgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(srgb_to_linear);
    let x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    let fx = lab_f(x / WHITE_D65[0]);
    let fy = lab_f(y / WHITE_D65[1]);
    let fz = lab_f(z / WHITE_D65[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// The a* (green-red) channel, min-max rescaled to `[0, 1]` over the image.
/// A constant a* plane maps to 0.5.
pub fn lab_a_channel(image: &ImageBuffer) -> Result<ImageBuffer> {
    if image.channels() != 3 {
        return Err(Error::InvalidArgument(format!(
            "a* channel needs an RGB image, got {} channel(s)",
            image.channels()
        )));
    }
    let (r, g, b) = (image.plane(0), image.plane(1), image.plane(2));
    let a: Vec<f64> = (0..image.pixel_count())
        .map(|i| srgb_to_lab([r[i], g[i], b[i]])[1])
        .collect();
    let lo = a.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let data = if span < 1e-12 {
        vec![0.5; a.len()]
    } else {
        a.iter()
            .map(|v| ((v - lo) / span).clamp(0.0, 1.0))
            .collect()
    };
    ImageBuffer::new(image.width(), image.height(), 1, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent CIELAB reference: CIE epsilon/kappa formulation with the
    /// companding written out inline.
    fn reference_lab(r: f64, g: f64, b: f64) -> [f64; 3] {
        let lin = |c: f64| {
            if c > 0.04045 {
                ((c + 0.055) / 1.055).powf(2.4)
            } else {
                c / 12.92
            }
        };
        let (r, g, b) = (lin(r), lin(g), lin(b));
        let m = [
            [0.4124564, 0.3575761, 0.1804375],
            [0.2126729, 0.7151522, 0.0721750],
            [0.0193339, 0.1191920, 0.9503041],
        ];
        let xyz: Vec<f64> = m
            .iter()
            .map(|row| row[0] * r + row[1] * g + row[2] * b)
            .collect();
        let eps = 216.0 / 24389.0;
        let kappa = 24389.0 / 27.0;
        let f = |t: f64| {
            if t > eps {
                t.powf(1.0 / 3.0)
            } else {
                (kappa * t + 16.0) / 116.0
            }
        };
        let fx = f(xyz[0] / 0.95047);
        let fy = f(xyz[1] / 1.0);
        let fz = f(xyz[2] / 1.08883);
        [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
    }

    #[test]
    fn matches_reference_formula() {
        for rgb in [
            [0.2, 0.6, 0.3],
            [0.9, 0.1, 0.05],
            [0.01, 0.02, 0.03],
            [1.0, 1.0, 1.0],
        ] {
            let got = srgb_to_lab(rgb);
            let want = reference_lab(rgb[0], rgb[1], rgb[2]);
            for i in 0..3 {
                assert!(
                    (got[i] - want[i]).abs() < 1e-6,
                    "{rgb:?}: {got:?} vs {want:?}"
                );
            }
        }
        // white point maps to L*=100, a*=b*=0
        let white = srgb_to_lab([1.0, 1.0, 1.0]);
        assert!((white[0] - 100.0).abs() < 1e-3 && white[1].abs() < 1e-3);
    }

    #[test]
    fn red_is_above_green() {
        let img = ImageBuffer::from_fn(2, 1, 3, |x, _, c| match (x, c) {
            (0, 0) | (1, 1) => 1.0,
            _ => 0.0,
        })
        .unwrap();
        let a = lab_a_channel(&img).unwrap();
        assert!(a.get(0, 0, 0) > a.get(1, 0, 0));
    }

    #[test]
    fn gray_image_is_flat_half() {
        let img = ImageBuffer::filled(4, 3, 3, 0.37).unwrap();
        let a = lab_a_channel(&img).unwrap();
        assert!(a.data().iter().all(|&v| v == 0.5));
        assert!(lab_a_channel(&ImageBuffer::filled(2, 2, 1, 0.1).unwrap()).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]
        #[test]
        fn permuting_pixels_commutes(values in proptest::collection::vec(0.0f64..1.0, 30), rot in 1usize..10) {
            let img = ImageBuffer::from_fn(10, 1, 3, |x, _, c| values[c * 10 + x]).unwrap();
            let shifted = ImageBuffer::from_fn(10, 1, 3, |x, _, c| values[c * 10 + (x + rot) % 10]).unwrap();
            let a = lab_a_channel(&img).unwrap();
            let b = lab_a_channel(&shifted).unwrap();
            for x in 0..10 {
                proptest::prop_assert_eq!(b.get(x, 0, 0), a.get((x + rot) % 10, 0, 0));
            }
        }
    }
}
