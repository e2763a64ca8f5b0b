use nalgebra::DMatrix;

use super::convergence::ConvergenceMonitor;
use super::field::{curvature_at, init_phi_checkerboard, LevelSetField};
use super::reinit::sussman_reinit;
use crate::error::{Error, Result};
use crate::imaging::{BinaryMask, ImageBuffer};
use crate::sparse::Dictionary;
use crate::stats::{
    fidelity_fields, mahalanobis_diag_columns, moment_sum, CorrelationMatrix, FidelityFields,
};

/// Largest front displacement per step, in pixels.
pub const CFL: f64 = 0.45;

/// Parameters of the level-set evolution.
#[derive(Debug, Clone, PartialEq)]
pub struct SegParams {
    /// Curvature weight μ.
    pub mu: f64,
    /// Area weight ν.
    pub nu: f64,
    /// Narrow-band half-width τ in pixels.
    pub tau: f64,
    pub heaviside_eps: f64,
    /// Relative area change `d` counted towards convergence.
    pub convergence_ratio: f64,
    pub patience: usize,
    pub max_steps: usize,
    /// Radius of the initial circles.
    pub radius: f64,
    /// Lattice spacing of the initial circles.
    pub spacing: f64,
    /// Ridge ε added to every correlation matrix.
    pub ridge: f64,
    /// Data terms are evaluated on intensities multiplied by this factor.
    pub intensity_scale: f64,
    /// Reinitialize every this many steps; 0 disables.
    pub reinit_every: usize,
    pub reinit_sweeps: usize,
}

impl Default for SegParams {
    fn default() -> Self {
        Self {
            mu: 25.0,
            nu: 35.0,
            tau: 5.0,
            heaviside_eps: 1.0,
            convergence_ratio: 0.005,
            patience: 5,
            max_steps: 1000,
            radius: 5.0,
            spacing: 12.0,
            ridge: 1e-3,
            intensity_scale: 255.0,
            reinit_every: 5,
            reinit_sweeps: 10,
        }
    }
}

impl SegParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::InvalidArgument(format!("{what} = {v}")));
        if self.mu < 0.0 || !self.mu.is_finite() {
            return bad("mu", self.mu);
        }
        if !self.nu.is_finite() {
            return bad("nu", self.nu);
        }
        if self.tau <= 0.0 || !self.tau.is_finite() {
            return bad("tau", self.tau);
        }
        if self.heaviside_eps <= 0.0 || !self.heaviside_eps.is_finite() {
            return bad("heaviside-eps", self.heaviside_eps);
        }
        if !(self.convergence_ratio > 0.0 && self.convergence_ratio < 1.0) {
            return bad("convergence-ratio", self.convergence_ratio);
        }
        if self.patience == 0 {
            return Err(Error::InvalidArgument("patience must be at least 1".into()));
        }
        if self.ridge < 0.0 || !self.ridge.is_finite() {
            return bad("ridge", self.ridge);
        }
        if self.intensity_scale <= 0.0 || !self.intensity_scale.is_finite() {
            return bad("intensity-scale", self.intensity_scale);
        }
        if self.reinit_every > 0 && self.reinit_sweeps == 0 {
            return Err(Error::InvalidArgument(
                "reinit-sweeps must be at least 1".into(),
            ));
        }
        if self.radius.is_nan() || self.radius <= 0.0 || self.radius >= self.spacing / 2.0 {
            return Err(Error::InvalidArgument(format!(
                "radius {} must be positive and below half the spacing {}",
                self.radius, self.spacing
            )));
        }
        Ok(())
    }
}

/// `f = μκ - ν - fid₁ + fid₂`.
pub fn force_field(
    kappa: &[f64],
    fid1: &[f64],
    fid2: &[f64],
    mu: f64,
    nu: f64,
) -> Result<Vec<f64>> {
    if kappa.len() != fid1.len() || kappa.len() != fid2.len() {
        return Err(Error::DimensionMismatch(format!(
            "curvature {}, fidelities {} and {}",
            kappa.len(),
            fid1.len(),
            fid2.len()
        )));
    }
    Ok(kappa
        .iter()
        .zip(fid1)
        .zip(fid2)
        .map(|((k, a), b)| mu * k - nu - a + b)
        .collect())
}

/// Step size keeping `dt · max|f| ≤ 0.45`; 1 when the force vanishes.
pub fn cfl_dt(force: &[f64]) -> Result<f64> {
    if force.is_empty() {
        return Err(Error::InvalidArgument("empty narrow band".into()));
    }
    let max = force.iter().fold(0.0f64, |m, f| m.max(f.abs()));
    if !max.is_finite() {
        return Err(Error::NonFinite("force field"));
    }
    Ok(if max < 1e-12 { 1.0 } else { CFL / max })
}

/// Region competition term of the force, `fid₂ - fid₁` on the band.
pub trait RegionForce {
    fn data_term(
        &mut self,
        phi: &LevelSetField,
        band: &[usize],
        warnings: &mut Vec<String>,
    ) -> Result<Vec<f64>>;
}

/// Correlation-weighted dictionary fidelities.
///
/// The moment sums of the foreground errors under `D₁` and the background
/// errors under `D₂` are kept current by adding and removing the columns of
/// pixels that changed side since the previous step.
pub struct KsvdRegionForce<'a> {
    fields: &'a FidelityFields,
    ridge: f64,
    scale2: f64,
    inside: Vec<bool>,
    fg_sum: DMatrix<f64>,
    bg_sum: DMatrix<f64>,
    fg_count: usize,
    initialized: bool,
}

impl<'a> KsvdRegionForce<'a> {
    pub fn new(fields: &'a FidelityFields, ridge: f64, intensity_scale: f64) -> Self {
        let k = fields.e1.dim();
        Self {
            fields,
            ridge,
            scale2: intensity_scale * intensity_scale,
            inside: Vec::new(),
            fg_sum: DMatrix::zeros(k, k),
            bg_sum: DMatrix::zeros(k, k),
            fg_count: 0,
            initialized: false,
        }
    }

    fn sync(&mut self, phi: &LevelSetField) {
        let e1 = &self.fields.e1.values;
        let e2 = &self.fields.e2.values;
        let now: Vec<bool> = phi.values().iter().map(|&v| v > 0.0).collect();
        if !self.initialized {
            let fg: Vec<usize> = (0..now.len()).filter(|&n| now[n]).collect();
            let bg: Vec<usize> = (0..now.len()).filter(|&n| !now[n]).collect();
            self.fg_sum = moment_sum(e1, Some(&fg));
            self.bg_sum = moment_sum(e2, Some(&bg));
            self.fg_count = fg.len();
            self.initialized = true;
        } else {
            let joined: Vec<usize> = (0..now.len())
                .filter(|&n| now[n] && !self.inside[n])
                .collect();
            let left: Vec<usize> = (0..now.len())
                .filter(|&n| !now[n] && self.inside[n])
                .collect();
            if !joined.is_empty() {
                self.fg_sum += moment_sum(e1, Some(&joined));
                self.bg_sum -= moment_sum(e2, Some(&joined));
            }
            if !left.is_empty() {
                self.fg_sum -= moment_sum(e1, Some(&left));
                self.bg_sum += moment_sum(e2, Some(&left));
            }
            self.fg_count = self.fg_count + joined.len() - left.len();
        }
        self.inside = now;
    }

    fn metric(
        &self,
        sum: &DMatrix<f64>,
        count: usize,
        region: &str,
        warnings: &mut Vec<String>,
    ) -> Result<CorrelationMatrix> {
        if count == 0 {
            warnings.push(format!(
                "{region} region is empty; using the identity metric"
            ));
            return Ok(CorrelationMatrix::identity(sum.nrows(), self.ridge));
        }
        CorrelationMatrix::from_second_moment(&(sum / count as f64), self.ridge)
    }
}

impl RegionForce for KsvdRegionForce<'_> {
    fn data_term(
        &mut self,
        phi: &LevelSetField,
        band: &[usize],
        warnings: &mut Vec<String>,
    ) -> Result<Vec<f64>> {
        let n = self.fields.e1.len();
        if phi.values().len() != n {
            return Err(Error::DimensionMismatch(format!(
                "level set of {} pixels for fidelity fields of {n}",
                phi.values().len()
            )));
        }
        self.sync(phi);
        let c1 = self.metric(&self.fg_sum, self.fg_count, "foreground", warnings)?;
        let c2 = self.metric(&self.bg_sum, n - self.fg_count, "background", warnings)?;
        let fid1 = mahalanobis_diag_columns(&self.fields.e1.values, Some(band), &c1)?;
        let fid2 = mahalanobis_diag_columns(&self.fields.e2.values, Some(band), &c2)?;
        Ok(fid1
            .iter()
            .zip(&fid2)
            .map(|(a, b)| self.scale2 * (b - a))
            .collect())
    }
}

/// One row of the evolution trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    /// Foreground area `S_t = Σ H_ε(φ)` after the step.
    pub area: f64,
    /// `|ΔS| / max(S, 1)`.
    pub ratio: f64,
    pub dt: f64,
    pub max_force: f64,
    pub band_size: usize,
}

/// Trace as CSV text with a header line.
pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("step,area,ratio,dt,max_force,band_size\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.step, r.area, r.ratio, r.dt, r.max_force, r.band_size
        ));
    }
    out
}

/// Result of a level-set evolution.
#[derive(Debug, Clone)]
pub struct EvolveOutcome {
    pub mask: BinaryMask,
    pub phi: LevelSetField,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    pub steps: usize,
    pub warnings: Vec<String>,
}

/// Narrow-band evolution of `phi` under `μκ - ν + data`.
pub fn evolve_with(
    phi: LevelSetField,
    params: &SegParams,
    force: &mut dyn RegionForce,
) -> Result<EvolveOutcome> {
    params.validate()?;
    let mut phi = phi;
    let mut monitor = ConvergenceMonitor::new(params.convergence_ratio, params.patience)?;
    monitor.observe(phi.area(params.heaviside_eps))?;
    let mut trace = Vec::new();
    let mut warnings = Vec::new();
    let mut converged = false;
    let mut steps = 0;

    for step in 1..=params.max_steps {
        let band = phi.band(params.tau);
        if band.is_empty() {
            warnings.push(format!("step {step}: narrow band is empty; stopping"));
            break;
        }
        let kappa = curvature_at(&phi, &band);
        let data = force.data_term(&phi, &band, &mut warnings)?;
        if data.len() != band.len() {
            return Err(Error::DimensionMismatch(format!(
                "data term of length {} on a band of {}",
                data.len(),
                band.len()
            )));
        }
        let f: Vec<f64> = kappa
            .iter()
            .zip(&data)
            .map(|(k, d)| params.mu * k - params.nu + d)
            .collect();
        let dt = cfl_dt(&f)?;
        let max_force = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        {
            let values = phi.values_mut();
            for (&n, fv) in band.iter().zip(&f) {
                values[n] += fv * dt;
            }
        }
        steps = step;
        if params.reinit_every > 0 && step % params.reinit_every == 0 {
            phi = sussman_reinit(&phi, params.reinit_sweeps);
        }
        let area = phi.area(params.heaviside_eps);
        converged = monitor.observe(area)?;
        trace.push(TraceRow {
            step,
            area,
            ratio: monitor.last_ratio().unwrap_or(0.0),
            dt,
            max_force,
            band_size: band.len(),
        });
        if converged {
            break;
        }
    }

    Ok(EvolveOutcome {
        mask: phi.mask(),
        phi,
        trace,
        converged,
        steps,
        warnings,
    })
}

/// Segments precomputed fidelity fields from the checkerboard initialization.
pub fn evolve_fields(fields: &FidelityFields, params: &SegParams) -> Result<EvolveOutcome> {
    params.validate()?;
    let phi = init_phi_checkerboard(fields.width, fields.height, params.radius, params.spacing)?;
    let mut force = KsvdRegionForce::new(fields, params.ridge, params.intensity_scale);
    evolve_with(phi, params, &mut force)
}

/// Codes every pixel's patch against both dictionaries and evolves the level
/// set. The run is deterministic in its inputs.
pub fn evolve(
    image: &ImageBuffer,
    d1: &Dictionary,
    d2: &Dictionary,
    sparsity: usize,
    params: &SegParams,
) -> Result<EvolveOutcome> {
    params.validate()?;
    let fields = fidelity_fields(image, d1, d2, sparsity)?;
    evolve_fields(&fields, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::PatchGeometry;
    use crate::stats::ErrorMatrix;

    #[test]
    fn force_examples() {
        let f = force_field(&[0.1], &[2.0], &[5.0], 25.0, 35.0).unwrap();
        assert!((f[0] + 29.5).abs() < 1e-12);
        let f = force_field(&[0.0; 3], &[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 25.0, 35.0).unwrap();
        assert_eq!(f, vec![-35.0; 3]);
        let f = force_field(&[0.0], &[1.0], &[40.0], 25.0, 35.0).unwrap();
        assert!(f[0] > 0.0);
        assert!(force_field(&[0.0], &[], &[1.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn cfl_examples() {
        assert_eq!(cfl_dt(&[0.9, -0.3]).unwrap(), 0.5);
        assert_eq!(cfl_dt(&[0.0, 0.0]).unwrap(), 1.0);
        assert!(cfl_dt(&[]).is_err());
        assert!(cfl_dt(&[f64::INFINITY]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn cfl_bound_holds(f in proptest::collection::vec(-1e6f64..1e6, 1..50)) {
            let dt = cfl_dt(&f).unwrap();
            let max = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            proptest::prop_assert!(dt * max <= CFL + 1e-12);
        }
    }

    struct Constant(f64);

    impl RegionForce for Constant {
        fn data_term(
            &mut self,
            _: &LevelSetField,
            band: &[usize],
            _: &mut Vec<String>,
        ) -> Result<Vec<f64>> {
            Ok(vec![self.0; band.len()])
        }
    }

    fn small_params() -> SegParams {
        SegParams {
            radius: 3.0,
            spacing: 10.0,
            tau: 3.0,
            max_steps: 40,
            ..SegParams::default()
        }
    }

    #[test]
    fn zero_steps_returns_initial_mask() {
        let params = SegParams {
            max_steps: 0,
            ..small_params()
        };
        let phi = init_phi_checkerboard(30, 20, 3.0, 10.0).unwrap();
        let out = evolve_with(phi.clone(), &params, &mut Constant(0.0)).unwrap();
        assert_eq!(out.mask, phi.mask());
        assert!(out.trace.is_empty());
        assert_eq!(out.steps, 0);
    }

    #[test]
    fn steps_respect_cfl_and_band() {
        let params = SegParams {
            reinit_every: 0,
            ..small_params()
        };
        let phi0 = init_phi_checkerboard(30, 20, 3.0, 10.0).unwrap();
        let band: Vec<usize> = phi0.band(params.tau);
        let params1 = SegParams {
            max_steps: 1,
            ..params.clone()
        };
        let out = evolve_with(phi0.clone(), &params1, &mut Constant(50.0)).unwrap();
        let row = &out.trace[0];
        assert!(row.dt * row.max_force <= CFL + 1e-12);
        for n in 0..phi0.values().len() {
            let change = (out.phi.values()[n] - phi0.values()[n]).abs();
            if band.contains(&n) {
                assert!(change <= CFL + 1e-12);
            } else {
                assert_eq!(change, 0.0);
            }
        }
        let out = evolve_with(phi0, &params, &mut Constant(50.0)).unwrap();
        assert!(out
            .trace
            .iter()
            .all(|r| r.dt * r.max_force <= CFL + 1e-12 && r.area.is_finite()));
    }

    #[test]
    fn positive_data_grows_negative_shrinks() {
        let params = small_params();
        let phi0 = init_phi_checkerboard(40, 40, 3.0, 10.0).unwrap();
        let grown = evolve_with(phi0.clone(), &params, &mut Constant(200.0)).unwrap();
        let shrunk = evolve_with(phi0.clone(), &params, &mut Constant(-200.0)).unwrap();
        let n0 = phi0.mask().count();
        assert!(grown.mask.count() > n0);
        assert!(shrunk.mask.count() < n0);
    }

    #[test]
    fn fidelity_cancels_with_equal_dictionaries_and_metrics() {
        let e = DMatrix::from_fn(4, 9, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.1 - 0.2);
        let c = CorrelationMatrix::from_second_moment(&(moment_sum(&e, None) / 9.0), 1e-3).unwrap();
        let band: Vec<usize> = (0..9).collect();
        let fid1 = mahalanobis_diag_columns(&e, Some(&band), &c).unwrap();
        let fid2 = mahalanobis_diag_columns(&e, Some(&band), &c).unwrap();
        let kappa = vec![0.05; 9];
        let f = force_field(&kappa, &fid1, &fid2, 25.0, 35.0).unwrap();
        assert!(f.iter().all(|v| *v == 25.0 * 0.05 - 35.0));
    }

    fn split(w: usize) -> usize {
        w * 3 / 10
    }

    fn synthetic_fields(w: usize, h: usize) -> FidelityFields {
        // left strip: errors small under D1, large under D2; elsewhere the reverse
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (small, large) = (
            Normal::new(0.0, 0.002).unwrap(),
            Normal::new(0.0, 0.1).unwrap(),
        );
        let k = 3;
        let pixels: Vec<(usize, usize)> =
            (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).collect();
        let mut e1 = DMatrix::zeros(k, w * h);
        let mut e2 = DMatrix::zeros(k, w * h);
        for (n, &(x, _)) in pixels.iter().enumerate() {
            for i in 0..k {
                let (a, b) = (small.sample(&mut rng), large.sample(&mut rng));
                if x < split(w) {
                    e1[(i, n)] = a;
                    e2[(i, n)] = b;
                } else {
                    e1[(i, n)] = b;
                    e2[(i, n)] = a;
                }
            }
        }
        FidelityFields {
            width: w,
            height: h,
            e1: ErrorMatrix::new(e1, pixels.clone()).unwrap(),
            e2: ErrorMatrix::new(e2, pixels).unwrap(),
        }
    }

    #[test]
    fn incremental_moments_match_recomputation() {
        let fields = synthetic_fields(20, 10);
        let mut force = KsvdRegionForce::new(&fields, 1e-3, 1.0);
        let mut warnings = Vec::new();
        let phi_a = init_phi_checkerboard(20, 10, 3.0, 10.0).unwrap();
        let phi_b = LevelSetField::from_fn(20, 10, |x, y| x as f64 - 7.5 + 0.1 * y as f64).unwrap();
        let band: Vec<usize> = (0..200).collect();
        force.data_term(&phi_a, &band, &mut warnings).unwrap();
        let incremental = force.data_term(&phi_b, &band, &mut warnings).unwrap();
        let mut fresh = KsvdRegionForce::new(&fields, 1e-3, 1.0);
        let direct = fresh.data_term(&phi_b, &band, &mut warnings).unwrap();
        for (a, b) in incremental.iter().zip(&direct) {
            assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0));
        }
        assert!(warnings.is_empty());
    }

    #[test]
    fn empty_region_falls_back_with_warning() {
        let fields = synthetic_fields(8, 4);
        let mut force = KsvdRegionForce::new(&fields, 1e-3, 1.0);
        let mut warnings = Vec::new();
        let phi = LevelSetField::new(8, 4, vec![-1.0; 32]).unwrap();
        let band: Vec<usize> = (0..32).collect();
        let d = force.data_term(&phi, &band, &mut warnings).unwrap();
        assert_eq!(d.len(), 32);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("foreground"));
    }

    #[test]
    fn two_region_fields_segment_left_strip() {
        let fields = synthetic_fields(40, 30);
        let params = SegParams {
            radius: 3.0,
            spacing: 10.0,
            tau: 3.0,
            max_steps: 400,
            ..SegParams::default()
        };
        let out = evolve_fields(&fields, &params).unwrap();
        let truth = BinaryMask::from_fn(40, 30, |x, _| x < split(40));
        let inter = (0..1200)
            .filter(|&n| out.mask.bits()[n] && truth.bits()[n])
            .count();
        let union = (0..1200)
            .filter(|&n| out.mask.bits()[n] || truth.bits()[n])
            .count();
        let iou = inter as f64 / union as f64;
        assert!(iou > 0.9, "iou {iou}, steps {}", out.steps);
        let again = evolve_fields(&fields, &params).unwrap();
        assert_eq!(again.mask, out.mask);
        assert_eq!(again.trace, out.trace);
    }

    #[test]
    fn geometry_errors_propagate() {
        let image = ImageBuffer::filled(6, 6, 1, 0.5).unwrap();
        let d3 = Dictionary::from_unnormalized(
            DMatrix::from_element(27, 2, 1.0),
            PatchGeometry::new(3, 3).unwrap(),
        )
        .unwrap();
        assert!(evolve(&image, &d3, &d3, 1, &small_params()).is_err());
        let bad = SegParams {
            tau: 0.0,
            ..small_params()
        };
        assert!(bad.validate().is_err());
        let bad = SegParams {
            radius: 6.0,
            ..small_params()
        };
        assert!(bad.validate().is_err());
    }
}
