use std::path::Path;

use image::{DynamicImage, GrayImage, ImageReader, RgbImage};

use crate::error::{Error, Result};

/// Planar, row-major raster with samples in `[0, 1]`.
///
/// Sample `(x, y, c)` lives at `c * width * height + y * width + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "empty {width}x{height} raster"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!(
                "{channels} channels; expected 1 or 3"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidImage(format!(
                "{} samples for a {width}x{height}x{channels} raster",
                data.len()
            )));
        }
        if let Some(v) = data
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::InvalidImage(format!("sample {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
    }

    /// Builds a raster from `f(x, y, c)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// One channel as a row-major plane.
    pub fn plane(&self, channel: usize) -> &[f64] {
        let n = self.pixel_count();
        &self.data[channel * n..(channel + 1) * n]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, channel: usize) -> f64 {
        self.data[channel * self.pixel_count() + y * self.width + x]
    }

    /// Writes one sample, clamping it into `[0, 1]`.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, channel: usize, value: f64) {
        let n = self.pixel_count();
        self.data[channel * n + y * self.width + x] = value.clamp(0.0, 1.0);
    }

    /// Replicates a single-channel raster into RGB; RGB input is cloned.
    pub fn to_rgb(&self) -> ImageBuffer {
        if self.channels == 3 {
            return self.clone();
        }
        let mut data = Vec::with_capacity(self.data.len() * 3);
        for _ in 0..3 {
            data.extend_from_slice(&self.data);
        }
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: 3,
            data,
        }
    }

    /// Reads an 8-bit PNG (or any format the decoder recognises). Images
    /// without color become one channel, everything else RGB; alpha is
    /// dropped.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let img = ImageReader::open(path.as_ref())?
            .with_guessed_format()?
            .decode()?;
        Ok(Self::from_dynamic(&img))
    }

    pub fn from_dynamic(img: &DynamicImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        if img.color().has_color() {
            let rgb = img.to_rgb8();
            let mut data = vec![0.0; w * h * 3];
            for (x, y, p) in rgb.enumerate_pixels() {
                for c in 0..3 {
                    data[c * w * h + y as usize * w + x as usize] = f64::from(p.0[c]) / 255.0;
                }
            }
            ImageBuffer {
                width: w,
                height: h,
                channels: 3,
                data,
            }
        } else {
            let gray = img.to_luma8();
            let data = gray
                .as_raw()
                .iter()
                .map(|&v| f64::from(v) / 255.0)
                .collect();
            ImageBuffer {
                width: w,
                height: h,
                channels: 1,
                data,
            }
        }
    }

    /// Quantizes to 8 bits, rounding half up.
    pub fn to_dynamic(&self) -> DynamicImage {
        let (w, h) = (self.width as u32, self.height as u32);
        let n = self.pixel_count();
        if self.channels == 1 {
            let raw = self.data.iter().map(|&v| quantize(v)).collect();
            DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, raw).expect("buffer size"))
        } else {
            let mut raw = Vec::with_capacity(n * 3);
            for i in 0..n {
                for c in 0..3 {
                    raw.push(quantize(self.data[c * n + i]));
                }
            }
            DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, raw).expect("buffer size"))
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_dynamic()
            .save_with_format(path.as_ref(), image::ImageFormat::Png)?;
        Ok(())
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// One boolean per pixel, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} bits for a {width}x{height} mask",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn complement(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn same_shape(&self, width: usize, height: usize) -> bool {
        self.width == width && self.height == height
    }

    pub fn ensure_shape(&self, width: usize, height: usize) -> Result<()> {
        if self.same_shape(width, height) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "mask is {}x{}, expected {width}x{height}",
                self.width, self.height
            )))
        }
    }

    /// Reads a mask image; any nonzero luma sample is `true`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let img = ImageReader::open(path.as_ref())?
            .with_guessed_format()?
            .decode()?;
        let gray = img.to_luma8();
        Ok(Self {
            width: gray.width() as usize,
            height: gray.height() as usize,
            bits: gray.as_raw().iter().map(|&v| v != 0).collect(),
        })
    }

    /// Writes an 8-bit single-channel PNG, 255 for `true`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let raw = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        GrayImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer size")
            .save_with_format(path.as_ref(), image::ImageFormat::Png)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_samples() {
        assert!(ImageBuffer::new(1, 1, 1, vec![1.5]).is_err());
        assert!(ImageBuffer::new(1, 1, 1, vec![f64::NAN]).is_err());
        assert!(ImageBuffer::new(2, 1, 3, vec![0.0; 5]).is_err());
        assert!(ImageBuffer::new(1, 1, 2, vec![0.0; 2]).is_err());
    }

    #[test]
    fn planar_layout() {
        let img =
            ImageBuffer::from_fn(3, 2, 3, |x, y, c| (x + 3 * y + 6 * c) as f64 / 20.0).unwrap();
        assert_eq!(img.get(2, 1, 2), 17.0 / 20.0);
        assert_eq!(img.data()[17], 17.0 / 20.0);
        assert_eq!(img.plane(1)[0], 6.0 / 20.0);
    }

    #[test]
    fn png_round_trip_quantizes_half_up() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        // 0.5 * 255 = 127.5 rounds up to 128
        let img =
            ImageBuffer::from_fn(4, 3, 3, |x, _, c| if c == 0 { 0.5 } else { x as f64 / 3.0 })
                .unwrap();
        img.save(&path).unwrap();
        let back = ImageBuffer::load(&path).unwrap();
        assert_eq!(back.channels(), 3);
        assert_eq!(back.get(0, 0, 0), 128.0 / 255.0);
        assert_eq!(back.get(3, 2, 1), 1.0);

        let gray = ImageBuffer::filled(2, 2, 1, 0.25).unwrap();
        gray.save(&path).unwrap();
        let back = ImageBuffer::load(&path).unwrap();
        assert_eq!(back.channels(), 1);
        assert_eq!(back.get(1, 1, 0), 64.0 / 255.0);
    }

    #[test]
    fn mask_png_nonzero_is_true() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.png");
        let mask = BinaryMask::from_fn(5, 4, |x, y| (x + y) % 3 == 0);
        mask.save(&path).unwrap();
        assert_eq!(BinaryMask::load(&path).unwrap(), mask);

        let gray = ImageBuffer::from_fn(2, 1, 1, |x, _, _| if x == 0 { 0.0 } else { 1.0 / 255.0 })
            .unwrap();
        gray.save(&path).unwrap();
        let m = BinaryMask::load(&path).unwrap();
        assert_eq!(m.bits(), &[false, true]);
    }
}
