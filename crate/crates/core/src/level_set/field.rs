use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::imaging::{mirror_index, BinaryMask};

/// Largest curvature magnitude a unit grid can represent.
pub const MAX_CURVATURE: f64 = 1.0;

/// Regularized Heaviside `½(1 + (2/π) atan(z/ε))`.
pub fn heaviside(z: f64, eps: f64) -> f64 {
    0.5 * (1.0 + (2.0 / PI) * (z / eps).atan())
}

/// Derivative of [`heaviside`], `(1/π) ε / (ε² + z²)`.
pub fn delta(z: f64, eps: f64) -> f64 {
    eps / (PI * (eps * eps + z * z))
}

/// Level-set function on the pixel grid; `φ > 0` marks foreground.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetField {
    width: usize,
    height: usize,
    phi: Vec<f64>,
}

impl LevelSetField {
    pub fn new(width: usize, height: usize, phi: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "level set of size {width}x{height}"
            )));
        }
        if phi.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}x{height} level set",
                phi.len()
            )));
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("level-set function"));
        }
        Ok(Self { width, height, phi })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let phi = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(width, height, phi)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.phi
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.phi
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.phi[y * self.width + x]
    }

    /// Value at a possibly out-of-range position, mirrored back onto the grid.
    pub fn get_mirrored(&self, x: isize, y: isize) -> f64 {
        self.phi[mirror_index(y, self.height) * self.width + mirror_index(x, self.width)]
    }

    /// `{φ > 0}`.
    pub fn mask(&self) -> BinaryMask {
        BinaryMask::new(
            self.width,
            self.height,
            self.phi.iter().map(|&v| v > 0.0).collect(),
        )
        .expect("shape is consistent by construction")
    }

    /// `Σ H_ε(φ)` over the whole domain.
    pub fn area(&self, eps: f64) -> f64 {
        self.phi.iter().map(|&v| heaviside(v, eps)).sum()
    }

    /// Raster indices of the narrow band `{|φ| < τ}`.
    pub fn band(&self, tau: f64) -> Vec<usize> {
        (0..self.phi.len())
            .filter(|&n| self.phi[n].abs() < tau)
            .collect()
    }

    /// Signed distance to the nearest grid-aligned circle of a square lattice.
    ///
    /// Circle centres sit at `spacing/2 + i·spacing` along each axis.
    pub fn checkerboard(width: usize, height: usize, radius: f64, spacing: f64) -> Result<Self> {
        init_phi_checkerboard(width, height, radius, spacing)
    }
}

fn lattice(len: usize, spacing: f64) -> Vec<f64> {
    let first = spacing / 2.0;
    let mut centres = vec![first];
    let mut c = first + spacing;
    while c < len as f64 {
        centres.push(c);
        c += spacing;
    }
    centres
}

fn nearest(centres: &[f64], v: f64, spacing: f64) -> f64 {
    let i = ((v - spacing / 2.0) / spacing).round();
    let i = i.clamp(0.0, (centres.len() - 1) as f64) as usize;
    centres[i]
}

/// `φ = radius - distance to the nearest lattice centre`.
pub fn init_phi_checkerboard(
    width: usize,
    height: usize,
    radius: f64,
    spacing: f64,
) -> Result<LevelSetField> {
    if radius <= 0.0 || !radius.is_finite() {
        return Err(Error::InvalidArgument(format!("circle radius {radius}")));
    }
    if !spacing.is_finite() || radius >= spacing / 2.0 {
        return Err(Error::InvalidArgument(format!(
            "circle radius {radius} must be below half the spacing {spacing}"
        )));
    }
    let cx = lattice(width, spacing);
    let cy = lattice(height, spacing);
    LevelSetField::from_fn(width, height, |x, y| {
        let (x, y) = (x as f64, y as f64);
        let dx = x - nearest(&cx, x, spacing);
        let dy = y - nearest(&cy, y, spacing);
        radius - (dx * dx + dy * dy).sqrt()
    })
}

/// `div(∇φ/|∇φ|)` from central differences on the mirrored 3x3 stencil;
/// zero where the gradient vanishes, and clamped to the grid-resolvable
/// range `[-1/h, 1/h]`.
pub fn curvature(phi: &LevelSetField, x: usize, y: usize) -> f64 {
    let (x, y) = (x as isize, y as isize);
    let p = |dx: isize, dy: isize| phi.get_mirrored(x + dx, y + dy);
    let c = p(0, 0);
    let px = 0.5 * (p(1, 0) - p(-1, 0));
    let py = 0.5 * (p(0, 1) - p(0, -1));
    let pxx = p(1, 0) - 2.0 * c + p(-1, 0);
    let pyy = p(0, 1) - 2.0 * c + p(0, -1);
    let pxy = 0.25 * (p(1, 1) - p(1, -1) - p(-1, 1) + p(-1, -1));
    let g2 = px * px + py * py;
    if g2 < 1e-12 {
        return 0.0;
    }
    let k = (pxx * py * py - 2.0 * pxy * px * py + pyy * px * px) / g2.powf(1.5);
    k.clamp(-MAX_CURVATURE, MAX_CURVATURE)
}

/// Curvature at the listed raster indices.
pub fn curvature_at(phi: &LevelSetField, indices: &[usize]) -> Vec<f64> {
    let w = phi.width();
    indices
        .iter()
        .map(|&n| curvature(phi, n % w, n / w))
        .collect()
}

/// Central-difference gradient magnitude.
pub fn gradient_magnitude(phi: &LevelSetField, x: usize, y: usize) -> f64 {
    let (x, y) = (x as isize, y as isize);
    let px = 0.5 * (phi.get_mirrored(x + 1, y) - phi.get_mirrored(x - 1, y));
    let py = 0.5 * (phi.get_mirrored(x, y + 1) - phi.get_mirrored(x, y - 1));
    (px * px + py * py).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk(size: usize, r: f64, outside_positive: bool) -> LevelSetField {
        let c = (size / 2) as f64;
        LevelSetField::from_fn(size, size, |x, y| {
            let d = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt();
            if outside_positive {
                d - r
            } else {
                r - d
            }
        })
        .unwrap()
    }

    #[test]
    fn heaviside_limits_and_symmetry() {
        assert_eq!(heaviside(0.0, 1.0), 0.5);
        assert!(heaviside(100.0, 1.0) > 0.99);
        assert!(heaviside(-100.0, 1.0) < 0.01);
        assert!(heaviside(250.0, 2.5) > 0.99);
        for z in [0.1, 1.0, 3.7, 20.0] {
            assert_eq!(delta(z, 1.5), delta(-z, 1.5));
            assert!((heaviside(z, 1.5) + heaviside(-z, 1.5) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn delta_is_derivative_and_integrates_to_one() {
        let eps = 0.7;
        for z in [-3.0, -0.2, 0.0, 0.5, 4.0] {
            let h = 1e-6;
            let fd = (heaviside(z + h, eps) - heaviside(z - h, eps)) / (2.0 * h);
            assert!((fd - delta(z, eps)).abs() < 1e-8);
        }
        // composite Simpson over [-50ε, 50ε]
        let (a, b, n) = (-50.0 * eps, 50.0 * eps, 20_000);
        let h = (b - a) / n as f64;
        let mut s = delta(a, eps) + delta(b, eps);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * delta(a + i as f64 * h, eps);
        }
        let integral = s * h / 3.0;
        assert!((integral - 1.0).abs() < 0.02, "{integral}");
    }

    #[test]
    fn checkerboard_centres_and_boundary() {
        let phi = init_phi_checkerboard(64, 64, 10.0, 30.0).unwrap();
        assert_eq!(phi.get(15, 15), 10.0);
        assert_eq!(phi.get(45, 45), 10.0);
        assert!(phi.get(25, 15).abs() < 1e-9);
        assert!(phi.get(15, 5).abs() < 1e-9);
        assert!((phi.get(0, 0) - (10.0 - (2.0f64 * 225.0).sqrt())).abs() < 1e-12);
        assert!(init_phi_checkerboard(8, 8, 0.0, 30.0).is_err());
        assert!(init_phi_checkerboard(8, 8, 15.0, 30.0).is_err());
        let tiny = init_phi_checkerboard(3, 2, 1.0, 30.0).unwrap();
        assert!(tiny.values().iter().all(|v| *v < 0.0));
    }

    #[test]
    fn checkerboard_gradient_is_unit_away_from_ridges() {
        let (r, s) = (10.0, 30.0);
        let phi = init_phi_checkerboard(90, 90, r, s).unwrap();
        let mut checked = 0;
        for y in 1..89 {
            for x in 1..89 {
                let v = phi.get(x, y);
                // distance from the cell's perpendicular bisectors
                let fx = (x as f64 - s / 2.0).rem_euclid(s);
                let fy = (y as f64 - s / 2.0).rem_euclid(s);
                let ridge = (fx - s / 2.0).abs().min((fy - s / 2.0).abs());
                let centre = (fx.min(s - fx)).hypot(fy.min(s - fy));
                if v.abs() < r && ridge > 2.0 && centre > 2.0 {
                    let g = gradient_magnitude(&phi, x, y);
                    assert!((g - 1.0).abs() < 0.05, "({x},{y}) |∇φ|={g}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn plane_and_constant_have_zero_curvature() {
        let plane = LevelSetField::from_fn(12, 12, |x, y| x as f64 - 0.3 * y as f64).unwrap();
        assert!(curvature(&plane, 6, 6).abs() < 1e-12);
        let flat = LevelSetField::new(5, 5, vec![2.0; 25]).unwrap();
        assert_eq!(curvature(&flat, 2, 2), 0.0);
        assert_eq!(curvature(&flat, 0, 4), 0.0);
    }

    #[test]
    fn disk_curvature_magnitude() {
        for (r, tol) in [(10.0, 0.1), (20.0, 0.05), (40.0, 0.05)] {
            let size = (4.0 * r) as usize + 8;
            let c = size / 2;
            let x = c + r as usize;
            let inside = curvature(&disk(size, r, false), x, c);
            let outside = curvature(&disk(size, r, true), x, c);
            assert!((inside + 1.0 / r).abs() <= tol / r, "r={r}: {inside}");
            assert!((outside - 1.0 / r).abs() <= tol / r, "r={r}: {outside}");
        }
    }

    #[test]
    fn disk_curvature_error_shrinks_with_radius() {
        let err = |r: f64| {
            let size = (4.0 * r) as usize + 8;
            let c = size / 2;
            let phi = disk(size, r, true);
            // average over the four axis points and four diagonals at distance r
            let d = (r / 2f64.sqrt()).round() as usize;
            let pts = [
                (c + r as usize, c),
                (c - r as usize, c),
                (c, c + r as usize),
                (c, c - r as usize),
            ];
            let mut e: f64 = pts
                .iter()
                .map(|&(x, y)| (curvature(&phi, x, y) * r - 1.0).abs())
                .sum::<f64>();
            let dist = ((d * d * 2) as f64).sqrt();
            e += (curvature(&phi, c + d, c + d) * dist - 1.0).abs();
            e / 5.0
        };
        let (e10, e20, e40) = (err(10.0), err(20.0), err(40.0));
        assert!(e20 <= e10 && e40 <= e20, "{e10} {e20} {e40}");
    }

    #[test]
    fn curvature_is_clamped_at_kinks() {
        let cone =
            LevelSetField::from_fn(9, 9, |x, y| 3.0 - (x as f64 - 4.0).hypot(y as f64 - 4.0))
                .unwrap();
        assert_eq!(curvature(&cone, 4, 4), 0.0);
        let k = curvature(&cone, 5, 4);
        assert!(k.abs() <= MAX_CURVATURE);
    }

    #[test]
    fn band_mask_area() {
        let phi = LevelSetField::new(4, 1, vec![-3.0, -0.5, 0.5, 3.0]).unwrap();
        assert_eq!(phi.band(1.0), vec![1, 2]);
        assert_eq!(phi.mask().bits(), &[false, false, true, true]);
        assert!((phi.area(1.0) - 2.0).abs() < 1e-12);
        assert!(LevelSetField::new(2, 1, vec![0.0, f64::NAN]).is_err());
        assert!(LevelSetField::new(2, 1, vec![0.0]).is_err());
    }
}
