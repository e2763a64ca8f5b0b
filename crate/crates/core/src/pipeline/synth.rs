use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::imaging::{BinaryMask, ImageBuffer};

/// Spatial structure of a texture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pattern {
    /// Sinusoidal stripes with the given period in pixels and orientation in radians.
    Stripes { period: f64, angle: f64 },
    /// Smoothly interpolated value noise on a lattice of the given cell size.
    Blotches { cell: f64 },
}

/// A stationary random colour texture: `mean + amplitude · pattern + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureSpec {
    pub pattern: Pattern,
    pub mean: [f64; 3],
    pub amplitude: [f64; 3],
    /// Standard deviation of independent per-pixel Gaussian noise.
    pub noise: f64,
}

/// Filled ellipse, rotated by `angle` radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub rx: f64,
    pub ry: f64,
    pub angle: f64,
}

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = (c * dx + s * dy) / self.rx;
        let v = (-s * dx + c * dy) / self.ry;
        u * u + v * v <= 1.0
    }

    fn bounding_radius(&self) -> f64 {
        self.rx.max(self.ry)
    }
}

/// Where the foreground texture is placed.
#[derive(Debug, Clone, PartialEq)]
pub enum BlobLayout {
    /// `count` non-overlapping ellipses with semi-axes in `[min_radius, max_radius]`,
    /// kept `margin` pixels from the border and from each other.
    Random {
        count: usize,
        min_radius: f64,
        max_radius: f64,
        margin: f64,
    },
    Explicit(Vec<Ellipse>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub foreground: TextureSpec,
    pub background: TextureSpec,
    pub layout: BlobLayout,
    pub seed: u64,
}

impl SynthConfig {
    /// Stripes on blotches with different mean colours.
    pub fn two_texture(width: usize, height: usize, seed: u64) -> Self {
        Self {
            width,
            height,
            foreground: TextureSpec {
                pattern: Pattern::Stripes {
                    period: 7.0,
                    angle: PI / 6.0,
                },
                mean: [0.62, 0.40, 0.32],
                amplitude: [0.22, 0.18, 0.12],
                noise: 0.03,
            },
            background: TextureSpec {
                pattern: Pattern::Blotches { cell: 6.0 },
                mean: [0.38, 0.55, 0.30],
                amplitude: [0.20, 0.22, 0.14],
                noise: 0.03,
            },
            layout: default_layout(width, height),
            seed,
        }
    }

    /// Stripes on blotches with identical mean colour and amplitude, so the
    /// regions differ only in spatial structure.
    pub fn iso_mean(width: usize, height: usize, seed: u64) -> Self {
        let mean = [0.5, 0.5, 0.5];
        let amplitude = [0.2, 0.2, 0.2];
        Self {
            foreground: TextureSpec {
                pattern: Pattern::Stripes {
                    period: 7.0,
                    angle: PI / 6.0,
                },
                mean,
                amplitude,
                noise: 0.03,
            },
            background: TextureSpec {
                pattern: Pattern::Blotches { cell: 3.0 },
                mean,
                amplitude,
                noise: 0.03,
            },
            ..Self::two_texture(width, height, seed)
        }
    }
}

fn default_layout(width: usize, height: usize) -> BlobLayout {
    let side = width.min(height) as f64;
    BlobLayout::Random {
        count: 4,
        min_radius: (side * 0.10).max(2.0),
        max_radius: (side * 0.18).max(3.0),
        margin: (side * 0.03).max(1.0),
    }
}

/// Generated image with its exact region masks.
#[derive(Debug, Clone)]
pub struct SyntheticImage {
    pub image: ImageBuffer,
    pub fg: BinaryMask,
    pub bg: BinaryMask,
    pub blobs: Vec<Ellipse>,
}

impl SyntheticImage {
    /// Writes `image.png`, `fg.png` and `bg.png`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.image.save(dir.join("image.png"))?;
        self.fg.save(dir.join("fg.png"))?;
        self.bg.save(dir.join("bg.png"))
    }
}

const PLACEMENT_ATTEMPTS: usize = 10_000;

fn place_blobs(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Ellipse>> {
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    match &cfg.layout {
        BlobLayout::Explicit(blobs) => {
            for b in blobs {
                if !(b.rx > 0.0 && b.ry > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "ellipse with semi-axes {} and {}",
                        b.rx, b.ry
                    )));
                }
            }
            Ok(blobs.clone())
        }
        &BlobLayout::Random {
            count,
            min_radius,
            max_radius,
            margin,
        } => {
            if !(min_radius > 0.0 && min_radius <= max_radius) || margin.is_nan() || margin < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "blob radii [{min_radius}, {max_radius}] with margin {margin}"
                )));
            }
            let mut placed: Vec<Ellipse> = Vec::with_capacity(count);
            for _ in 0..count {
                let mut ok = None;
                for _ in 0..PLACEMENT_ATTEMPTS {
                    let rx = rng.random_range(min_radius..=max_radius);
                    let ry = rng.random_range(min_radius..=max_radius);
                    let r = rx.max(ry);
                    let lo = r + margin;
                    if 2.0 * lo >= w || 2.0 * lo >= h {
                        continue;
                    }
                    let e = Ellipse {
                        cx: rng.random_range(lo..w - lo),
                        cy: rng.random_range(lo..h - lo),
                        rx,
                        ry,
                        angle: rng.random_range(0.0..PI),
                    };
                    let clear = placed.iter().all(|p| {
                        (p.cx - e.cx).hypot(p.cy - e.cy) > p.bounding_radius() + r + margin
                    });
                    if clear {
                        ok = Some(e);
                        break;
                    }
                }
                placed.push(ok.ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "cannot place {count} non-overlapping blobs in a {}x{} image",
                        cfg.width, cfg.height
                    ))
                })?);
            }
            Ok(placed)
        }
    }
}

/// A realized texture field, sampled per pixel and channel.
struct Texture {
    spec: TextureSpec,
    phase: f64,
    lattice: Vec<f64>,
    lattice_w: usize,
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

impl Texture {
    fn new(spec: &TextureSpec, width: usize, height: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let phase = rng.random_range(0.0..2.0 * PI);
        let (lattice, lattice_w) = match spec.pattern {
            Pattern::Blotches { cell } => {
                if cell.is_nan() || cell <= 0.0 {
                    return Err(Error::InvalidArgument(format!("blotch cell size {cell}")));
                }
                let lw = (width as f64 / cell).ceil() as usize + 2;
                let lh = (height as f64 / cell).ceil() as usize + 2;
                (
                    (0..lw * lh).map(|_| rng.random_range(-1.0..=1.0)).collect(),
                    lw,
                )
            }
            Pattern::Stripes { period, .. } => {
                if period.is_nan() || period <= 0.0 {
                    return Err(Error::InvalidArgument(format!("stripe period {period}")));
                }
                (Vec::new(), 0)
            }
        };
        Ok(Self {
            spec: spec.clone(),
            phase,
            lattice,
            lattice_w,
        })
    }

    fn pattern(&self, x: f64, y: f64) -> f64 {
        match self.spec.pattern {
            Pattern::Stripes { period, angle } => {
                (2.0 * PI * (x * angle.cos() + y * angle.sin()) / period + self.phase).sin()
            }
            Pattern::Blotches { cell } => {
                let (gx, gy) = (x / cell, y / cell);
                let (ix, iy) = (gx.floor() as usize, gy.floor() as usize);
                let (tx, ty) = (smoothstep(gx.fract()), smoothstep(gy.fract()));
                let at = |i: usize, j: usize| self.lattice[j * self.lattice_w + i];
                let top = at(ix, iy) * (1.0 - tx) + at(ix + 1, iy) * tx;
                let bottom = at(ix, iy + 1) * (1.0 - tx) + at(ix + 1, iy + 1) * tx;
                top * (1.0 - ty) + bottom * ty
            }
        }
    }
}

/// Fills the background with the second texture and the blobs with the
/// first. Deterministic in `cfg.seed`.
pub fn gen_synthetic(cfg: &SynthConfig) -> Result<SyntheticImage> {
    if cfg.width == 0 || cfg.height == 0 {
        return Err(Error::InvalidArgument(format!(
            "image size {}x{}",
            cfg.width, cfg.height
        )));
    }
    for spec in [&cfg.foreground, &cfg.background] {
        if spec.noise.is_nan() || spec.noise < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "noise level {}",
                spec.noise
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let blobs = place_blobs(cfg, &mut rng)?;
    let fg = BinaryMask::from_fn(cfg.width, cfg.height, |x, y| {
        blobs.iter().any(|b| b.contains(x as f64, y as f64))
    });
    let t1 = Texture::new(&cfg.foreground, cfg.width, cfg.height, &mut rng)?;
    let t2 = Texture::new(&cfg.background, cfg.width, cfg.height, &mut rng)?;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let (w, h) = (cfg.width, cfg.height);
    let mut data = vec![0.0; 3 * w * h];
    for y in 0..h {
        for x in 0..w {
            let t = if fg.get(x, y) { &t1 } else { &t2 };
            let p = t.pattern(x as f64, y as f64);
            for c in 0..3 {
                let v = t.spec.mean[c]
                    + t.spec.amplitude[c] * p
                    + t.spec.noise * normal.sample(&mut rng);
                data[c * w * h + y * w + x] = v.clamp(0.0, 1.0);
            }
        }
    }
    let bg = fg.complement();
    Ok(SyntheticImage {
        image: ImageBuffer::new(w, h, 3, data)?,
        fg,
        bg,
        blobs,
    })
}
