use super::evolve::{evolve_with, EvolveOutcome, RegionForce, SegParams};
use super::field::{curvature_at, init_phi_checkerboard, LevelSetField};
use crate::error::{Error, Result};
use crate::imaging::{lab_a_channel, ImageBuffer};

/// Which image channels the piecewise-constant model sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvMode {
    /// A single-channel image.
    Scalar,
    /// All channels, with squared distances summed over channels.
    Vector,
    /// The rescaled CIELAB a* channel of an RGB image.
    AStar,
}

impl CvMode {
    /// The image the model operates on.
    pub fn prepare(self, image: &ImageBuffer) -> Result<ImageBuffer> {
        match self {
            CvMode::Scalar if image.channels() != 1 => Err(Error::InvalidImage(format!(
                "scalar mode needs one channel, got {}",
                image.channels()
            ))),
            CvMode::Scalar | CvMode::Vector => Ok(image.clone()),
            CvMode::AStar => lab_a_channel(image),
        }
    }
}

/// Per-channel means of `{φ > 0}` and `{φ ≤ 0}`. An empty region takes the
/// global mean and adds a warning.
pub fn region_means(
    image: &ImageBuffer,
    phi: &LevelSetField,
    warnings: &mut Vec<String>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if phi.width() != image.width() || phi.height() != image.height() {
        return Err(Error::DimensionMismatch(format!(
            "level set {}x{} for image {}x{}",
            phi.width(),
            phi.height(),
            image.width(),
            image.height()
        )));
    }
    let inside: Vec<bool> = phi.values().iter().map(|&v| v > 0.0).collect();
    let n_in = inside.iter().filter(|&&b| b).count();
    let n_out = inside.len() - n_in;
    let mut c1 = Vec::with_capacity(image.channels());
    let mut c2 = Vec::with_capacity(image.channels());
    for c in 0..image.channels() {
        let plane = image.plane(c);
        let (mut s_in, mut s_out) = (0.0, 0.0);
        for (v, &b) in plane.iter().zip(&inside) {
            if b {
                s_in += v;
            } else {
                s_out += v;
            }
        }
        let global = (s_in + s_out) / plane.len() as f64;
        c1.push(if n_in > 0 { s_in / n_in as f64 } else { global });
        c2.push(if n_out > 0 {
            s_out / n_out as f64
        } else {
            global
        });
    }
    if n_in == 0 {
        warnings.push("foreground region is empty; using the global mean".into());
    }
    if n_out == 0 {
        warnings.push("background region is empty; using the global mean".into());
    }
    Ok((c1, c2))
}

/// Piecewise-constant region competition `-λ₁‖I - c₁‖² + λ₂‖I - c₂‖²`.
pub struct ChanVeseForce {
    image: ImageBuffer,
    lambda1: f64,
    lambda2: f64,
    scale2: f64,
}

impl ChanVeseForce {
    pub fn new(
        image: &ImageBuffer,
        mode: CvMode,
        lambda1: f64,
        lambda2: f64,
        intensity_scale: f64,
    ) -> Result<Self> {
        Ok(Self {
            image: mode.prepare(image)?,
            lambda1,
            lambda2,
            scale2: intensity_scale * intensity_scale,
        })
    }
}

impl RegionForce for ChanVeseForce {
    fn data_term(
        &mut self,
        phi: &LevelSetField,
        band: &[usize],
        warnings: &mut Vec<String>,
    ) -> Result<Vec<f64>> {
        let (c1, c2) = region_means(&self.image, phi, warnings)?;
        let planes: Vec<&[f64]> = (0..self.image.channels())
            .map(|c| self.image.plane(c))
            .collect();
        Ok(band
            .iter()
            .map(|&n| {
                let (mut d1, mut d2) = (0.0, 0.0);
                for (c, plane) in planes.iter().enumerate() {
                    d1 += (plane[n] - c1[c]).powi(2);
                    d2 += (plane[n] - c2[c]).powi(2);
                }
                self.scale2 * (self.lambda2 * d2 - self.lambda1 * d1)
            })
            .collect())
    }
}

/// Full-grid Chan-Vese force `μκ - ν - λ₁‖I - c₁‖² + λ₂‖I - c₂‖²`,
/// intensities taken at unit scale.
#[allow(clippy::too_many_arguments)]
pub fn baseline_cv_force(
    image: &ImageBuffer,
    phi: &LevelSetField,
    lambda1: f64,
    lambda2: f64,
    mu: f64,
    nu: f64,
    mode: CvMode,
) -> Result<Vec<f64>> {
    let mut force = ChanVeseForce::new(image, mode, lambda1, lambda2, 1.0)?;
    let all: Vec<usize> = (0..phi.values().len()).collect();
    let data = force.data_term(phi, &all, &mut Vec::new())?;
    let kappa = curvature_at(phi, &all);
    Ok(kappa
        .iter()
        .zip(&data)
        .map(|(k, d)| mu * k - nu + d)
        .collect())
}

/// Chan-Vese segmentation with the same initialization, stepping,
/// reinitialization and stopping rule as the dictionary-driven evolution.
pub fn evolve_chan_vese(
    image: &ImageBuffer,
    mode: CvMode,
    lambda1: f64,
    lambda2: f64,
    params: &SegParams,
) -> Result<EvolveOutcome> {
    params.validate()?;
    let mut force = ChanVeseForce::new(image, mode, lambda1, lambda2, params.intensity_scale)?;
    let phi = init_phi_checkerboard(image.width(), image.height(), params.radius, params.spacing)?;
    evolve_with(phi, params, &mut force)
}
