//! Approximation errors and their correlation-weighted quadratic forms.
//!
//! A region's fidelity at pixel `n` is `eₙᵀ C⁻¹ eₙ`, where `eₙ = Pₙ - Dαₙ` is
//! the patch's approximation error under the region's dictionary and `C` is
//! the correlation matrix of the errors currently assigned to that region.
//! Errors are treated as zero-mean, so `Σ = E Eᵀ / N` is a second moment, and
//! `C = diag(Σ)^{-1/2} Σ diag(Σ)^{-1/2} + εI`.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};
use crate::imaging::{patch_set, ImageBuffer, PatchSet};
use crate::sparse::{batch_omp_codes, Dictionary, GramCache};

/// Columns gathered per block when accumulating `E Eᵀ`.
const MOMENT_BLOCK: usize = 2048;
/// Pixels coded per block in [`fidelity_fields`].
const CODING_BLOCK: usize = 4096;

/// Per-pixel approximation errors, one column per pixel.
#[derive(Debug, Clone)]
pub struct ErrorMatrix {
    pub values: DMatrix<f64>,
    pub pixels: Vec<(usize, usize)>,
}

impl ErrorMatrix {
    pub fn new(values: DMatrix<f64>, pixels: Vec<(usize, usize)>) -> Result<Self> {
        if values.ncols() != pixels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} error columns for {} pixels",
                values.ncols(),
                pixels.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("approximation errors"));
        }
        Ok(Self { values, pixels })
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.ncols() == 0
    }
}

/// `E = P - D·A`.
pub fn approximation_errors(
    patches: &PatchSet,
    dict: &Dictionary,
    codes: &DMatrix<f64>,
) -> Result<ErrorMatrix> {
    if patches.values.nrows() != dict.dim()
        || codes.nrows() != dict.n_atoms()
        || codes.ncols() != patches.len()
    {
        return Err(Error::DimensionMismatch(format!(
            "patches {:?}, dictionary {}x{}, codes {:?}",
            patches.values.shape(),
            dict.dim(),
            dict.n_atoms(),
            codes.shape()
        )));
    }
    let mut e = patches.values.clone();
    e.gemm(-1.0, dict.atoms(), codes, 1.0);
    ErrorMatrix::new(e, patches.centers.clone())
}

/// Unnormalized `Σₙ eₙeₙᵀ` over the selected columns (all when `None`),
/// accumulated block by block in a fixed order.
pub fn moment_sum(e: &DMatrix<f64>, columns: Option<&[usize]>) -> DMatrix<f64> {
    let k = e.nrows();
    let mut acc = DMatrix::zeros(k, k);
    let total = columns.map_or(e.ncols(), |c| c.len());
    let mut start = 0;
    while start < total {
        let end = (start + MOMENT_BLOCK).min(total);
        let n = end - start;
        let mut block = DMatrix::zeros(k, n);
        for b in 0..n {
            let col = columns.map_or(start + b, |c| c[start + b]);
            block.column_mut(b).copy_from(&e.column(col));
        }
        let block_t = block.transpose();
        acc.gemm(1.0, &block, &block_t, 1.0);
        start = end;
    }
    // exact symmetry regardless of accumulation order
    for i in 0..k {
        for j in 0..i {
            let v = 0.5 * (acc[(i, j)] + acc[(j, i)]);
            acc[(i, j)] = v;
            acc[(j, i)] = v;
        }
    }
    acc
}

/// Ridge-regularized correlation matrix with a cached inverse.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    matrix: DMatrix<f64>,
    ridge: f64,
    inverse: Option<DMatrix<f64>>,
}

impl CorrelationMatrix {
    /// `(1 + ε) I`, the fallback metric for an empty region.
    pub fn identity(k: usize, ridge: f64) -> Self {
        Self::from_correlation(DMatrix::identity(k, k), ridge)
    }

    /// Standardizes a second-moment matrix `Σ` and adds the ridge.
    /// Dimensions with zero variance keep scale 1 and a unit diagonal.
    pub fn from_second_moment(sigma: &DMatrix<f64>, ridge: f64) -> Result<Self> {
        if !sigma.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "second moment {:?}",
                sigma.shape()
            )));
        }
        if ridge < 0.0 || !ridge.is_finite() {
            return Err(Error::InvalidArgument(format!("ridge {ridge}")));
        }
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("second-moment matrix"));
        }
        let k = sigma.nrows();
        let scale: Vec<f64> = (0..k)
            .map(|i| {
                let v = sigma[(i, i)];
                if v > 0.0 {
                    v.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let mut c = DMatrix::from_fn(k, k, |i, j| sigma[(i, j)] / (scale[i] * scale[j]));
        for i in 0..k {
            c[(i, i)] = 1.0;
        }
        Ok(Self::from_correlation(c, ridge))
    }

    fn from_correlation(mut c: DMatrix<f64>, ridge: f64) -> Self {
        for i in 0..c.nrows() {
            c[(i, i)] += ridge;
        }
        let inverse = Cholesky::<f64, Dyn>::new(c.clone()).map(|ch| {
            let mut inv = ch.inverse();
            let k = inv.nrows();
            for i in 0..k {
                for j in 0..i {
                    let v = 0.5 * (inv[(i, j)] + inv[(j, i)]);
                    inv[(i, j)] = v;
                    inv[(j, i)] = v;
                }
            }
            inv
        });
        Self {
            matrix: c,
            ridge,
            inverse,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `None` when the matrix is not numerically positive definite.
    pub fn inverse(&self) -> Option<&DMatrix<f64>> {
        self.inverse.as_ref()
    }

    /// `eᵀ C⁻¹ e` for one vector.
    pub fn quadratic_form(&self, e: &[f64]) -> Result<f64> {
        let inv = self.require_inverse()?;
        if e.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} for a {}x{0} metric",
                e.len(),
                self.dim()
            )));
        }
        let mut total = 0.0;
        for i in 0..e.len() {
            let row: f64 = (0..e.len()).map(|j| inv[(i, j)] * e[j]).sum();
            total += row * e[i];
        }
        Ok(total.max(0.0))
    }

    fn require_inverse(&self) -> Result<&DMatrix<f64>> {
        self.inverse.as_ref().ok_or_else(|| {
            Error::Numerical(
                "correlation matrix is not positive definite; increase the ridge".into(),
            )
        })
    }
}

/// Correlation matrix of all columns of `e`.
pub fn correlation_matrix(e: &ErrorMatrix, ridge: f64) -> Result<CorrelationMatrix> {
    correlation_of_columns(&e.values, None, ridge)
}

/// Correlation matrix of a subset of columns (all when `None`).
pub fn correlation_of_columns(
    e: &DMatrix<f64>,
    columns: Option<&[usize]>,
    ridge: f64,
) -> Result<CorrelationMatrix> {
    let n = columns.map_or(e.ncols(), |c| c.len());
    if n == 0 {
        return Err(Error::InvalidArgument("correlation of zero samples".into()));
    }
    if e.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("approximation errors"));
    }
    let sigma = moment_sum(e, columns) / n as f64;
    CorrelationMatrix::from_second_moment(&sigma, ridge)
}

/// `diag(Eᵀ C⁻¹ E)` as column sums of `(C⁻¹E) ⊙ E`, never forming the
/// `N x N` product.
pub fn mahalanobis_diag(e: &DMatrix<f64>, c: &CorrelationMatrix) -> Result<Vec<f64>> {
    mahalanobis_diag_columns(e, None, c)
}

/// [`mahalanobis_diag`] restricted to the selected columns, in order.
pub fn mahalanobis_diag_columns(
    e: &DMatrix<f64>,
    columns: Option<&[usize]>,
    c: &CorrelationMatrix,
) -> Result<Vec<f64>> {
    if e.nrows() != c.dim() {
        return Err(Error::DimensionMismatch(format!(
            "errors of dimension {} for a {}x{} metric",
            e.nrows(),
            c.dim(),
            c.dim()
        )));
    }
    let inv = c.require_inverse()?;
    let k = e.nrows();
    let total = columns.map_or(e.ncols(), |cols| cols.len());
    let mut out = Vec::with_capacity(total);
    let mut start = 0;
    while start < total {
        let end = (start + MOMENT_BLOCK).min(total);
        let n = end - start;
        let block = match columns {
            None => e.columns(start, n).into_owned(),
            Some(cols) => {
                let mut b = DMatrix::zeros(k, n);
                for i in 0..n {
                    b.column_mut(i).copy_from(&e.column(cols[start + i]));
                }
                b
            }
        };
        let weighted = inv * &block;
        for i in 0..n {
            let v = weighted.column(i).dot(&block.column(i));
            out.push(v.max(0.0));
        }
        start = end;
    }
    Ok(out)
}

/// Approximation errors of every pixel's patch under both dictionaries.
#[derive(Debug, Clone)]
pub struct FidelityFields {
    pub width: usize,
    pub height: usize,
    /// Errors under the foreground dictionary, pixel `y * width + x` in column `y * width + x`.
    pub e1: ErrorMatrix,
    /// Errors under the background dictionary.
    pub e2: ErrorMatrix,
}

fn check_geometry(image: &ImageBuffer, d1: &Dictionary, d2: &Dictionary) -> Result<()> {
    if d1.geometry() != d2.geometry() {
        return Err(Error::DimensionMismatch(format!(
            "dictionaries disagree on patch geometry: {:?} vs {:?}",
            d1.geometry(),
            d2.geometry()
        )));
    }
    if d1.geometry().channels != image.channels() {
        return Err(Error::DimensionMismatch(format!(
            "dictionaries expect {} channel(s), image has {}",
            d1.geometry().channels,
            image.channels()
        )));
    }
    Ok(())
}

/// Codes one mirror-padded patch per pixel against each dictionary and
/// returns the two error matrices in raster order.
pub fn fidelity_fields(
    image: &ImageBuffer,
    d1: &Dictionary,
    d2: &Dictionary,
    sparsity: usize,
) -> Result<FidelityFields> {
    check_geometry(image, d1, d2)?;
    let s = d1.geometry().patch_size;
    let k = d1.dim();
    let n = image.pixel_count();
    let pixels: Vec<(usize, usize)> = (0..image.height())
        .flat_map(|y| (0..image.width()).map(move |x| (x, y)))
        .collect();
    let caches = [GramCache::new(d1), GramCache::new(d2)];
    let mut errors = [DMatrix::zeros(k, n), DMatrix::zeros(k, n)];

    for start in (0..n).step_by(CODING_BLOCK) {
        let end = (start + CODING_BLOCK).min(n);
        let block = patch_set(image, s, Some(&pixels[start..end]))?;
        for (which, dict) in [d1, d2].into_iter().enumerate() {
            let codes = batch_omp_codes(dict, &block.values, sparsity, Some(&caches[which]))?;
            for (b, code) in codes.iter().enumerate() {
                let mut col = errors[which].column_mut(start + b);
                col.copy_from(&block.values.column(b));
                for &j in &code.support {
                    col.axpy(-code.coefficients[j], &dict.atoms().column(j), 1.0);
                }
            }
        }
    }
    let [e1, e2] = errors;
    Ok(FidelityFields {
        width: image.width(),
        height: image.height(),
        e1: ErrorMatrix::new(e1, pixels.clone())?,
        e2: ErrorMatrix::new(e2, pixels)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{extract_patch, PatchGeometry};
    use crate::sparse::omp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>() - 0.5)
    }

    fn random_dict(geometry: PatchGeometry, n_atoms: usize, rng: &mut ChaCha8Rng) -> Dictionary {
        Dictionary::from_unnormalized(random(geometry.dim(), n_atoms, rng), geometry).unwrap()
    }

    #[test]
    fn errors_match_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let geometry = PatchGeometry::new(1, 6).unwrap();
        let dict = random_dict(geometry, 10, &mut rng);
        let patches = PatchSet {
            values: random(6, 7, &mut rng),
            centers: (0..7).map(|i| (i, 0)).collect(),
            geometry,
        };
        let codes = random(10, 7, &mut rng);
        let e = approximation_errors(&patches, &dict, &codes).unwrap();
        for i in 0..6 {
            for n in 0..7 {
                let mut v = patches.values[(i, n)];
                for j in 0..10 {
                    v -= dict.atoms()[(i, j)] * codes[(j, n)];
                }
                assert!((e.values[(i, n)] - v).abs() < 1e-14);
            }
        }
        let zero = approximation_errors(&patches, &dict, &DMatrix::zeros(10, 7)).unwrap();
        assert_eq!(zero.values, patches.values);
        let exact = PatchSet {
            values: dict.atoms() * &codes,
            ..patches.clone()
        };
        let e = approximation_errors(&exact, &dict, &codes).unwrap();
        assert!(e.values.amax() < 1e-14);
        assert!(approximation_errors(&patches, &dict, &DMatrix::zeros(9, 7)).is_err());
    }

    #[test]
    fn correlation_hand_computation() {
        let e = ErrorMatrix::new(
            DMatrix::from_column_slice(2, 2, &[1.0, 1.0, -1.0, -1.0]),
            vec![(0, 0), (1, 0)],
        )
        .unwrap();
        let c = correlation_matrix(&e, 0.0).unwrap();
        assert_eq!(c.matrix(), &DMatrix::from_element(2, 2, 1.0));
        assert!(c.inverse().is_none());
        assert!(mahalanobis_diag(&e.values, &c).is_err());
        let c = correlation_matrix(&e, 1e-3).unwrap();
        assert!(c.inverse().is_some());
        assert!((c.matrix()[(0, 0)] - 1.001).abs() < 1e-15);
    }

    #[test]
    fn unit_diagonal_moment_is_unchanged() {
        let sigma = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, -0.2, 0.3, 1.0, 0.1, -0.2, 0.1, 1.0]);
        let c = CorrelationMatrix::from_second_moment(&sigma, 0.01).unwrap();
        let expected = &sigma + DMatrix::identity(3, 3) * 0.01;
        assert!((c.matrix() - expected).amax() < 1e-15);
    }

    #[test]
    fn zero_variance_dimension_keeps_unit_scale() {
        let e = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, -1.0, 0.0, 0.0, 0.0]);
        let c = correlation_of_columns(&e, None, 0.0).unwrap();
        assert_eq!(c.matrix(), &DMatrix::identity(2, 2));
        assert!(correlation_of_columns(&e, Some(&[]), 0.0).is_err());
    }

    #[test]
    fn identity_metric_gives_squared_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = random(4, 5, &mut rng);
        let c = CorrelationMatrix::identity(4, 0.0);
        let d = mahalanobis_diag(&e, &c).unwrap();
        for (n, v) in d.iter().enumerate() {
            assert!((v - e.column(n).norm_squared()).abs() < 1e-14);
        }
        let single = mahalanobis_diag(&e.columns(2, 1).into_owned(), &c).unwrap();
        assert_eq!(single.len(), 1);
        assert!((single[0] - c.quadratic_form(e.column(2).as_slice()).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn fast_diagonal_matches_explicit_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = random(5, 9, &mut rng);
        let c = correlation_of_columns(&random(5, 30, &mut rng), None, 1e-3).unwrap();
        let fast = mahalanobis_diag(&e, &c).unwrap();
        let inv = c.matrix().clone().try_inverse().unwrap();
        let full = e.transpose() * inv * &e;
        for n in 0..9 {
            assert!((fast[n] - full[(n, n)]).abs() <= 1e-10 * full[(n, n)].abs().max(1e-300));
        }
        let subset = mahalanobis_diag_columns(&e, Some(&[4, 1]), &c).unwrap();
        assert_eq!(subset, vec![fast[4], fast[1]]);
    }

    #[test]
    fn fidelity_fields_single_pixel() {
        let image = ImageBuffer::filled(1, 1, 1, 0.4).unwrap();
        let geometry = PatchGeometry::new(1, 1).unwrap();
        let d = Dictionary::new(DMatrix::from_element(1, 1, 1.0), geometry).unwrap();
        let f = fidelity_fields(&image, &d, &d, 1).unwrap();
        assert_eq!(f.e1.len(), 1);
        assert!(f.e1.values[(0, 0)].abs() < 1e-15);
    }

    #[test]
    fn fidelity_fields_compose_patch_and_omp() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let image = ImageBuffer::from_fn(16, 16, 3, |_, _, _| rng.random::<f64>()).unwrap();
        let geometry = PatchGeometry::new(3, 3).unwrap();
        let d1 = random_dict(geometry, 40, &mut rng);
        let d2 = random_dict(geometry, 30, &mut rng);
        let f = fidelity_fields(&image, &d1, &d2, 4).unwrap();
        assert_eq!(f.e1.len(), 256);
        assert_eq!(f.e2.len(), 256);
        for (n, &(x, y)) in f.e1.pixels.iter().enumerate().step_by(7) {
            assert_eq!(n, y * 16 + x);
            let p = extract_patch(&image, (x, y), 3).unwrap();
            for (dict, e) in [(&d1, &f.e1), (&d2, &f.e2)] {
                let code = omp(dict, &p.values, 4).unwrap();
                let recon = code.reconstruct(dict);
                for (i, r) in recon.iter().enumerate() {
                    assert!((e.values[(i, n)] - (p.values[i] - r)).abs() < 1e-9);
                }
            }
        }
        let other = random_dict(PatchGeometry::new(2, 3).unwrap(), 10, &mut rng);
        assert!(fidelity_fields(&image, &d1, &other, 2).is_err());
        let gray = ImageBuffer::filled(4, 4, 1, 0.2).unwrap();
        assert!(fidelity_fields(&gray, &d1, &d2, 2).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]

        #[test]
        fn correlation_is_symmetric_with_eigen_floor(seed in 0u64..10_000, n in 1usize..12, ridge in 0.0f64..0.1) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let e = random(5, n, &mut rng);
            let c = correlation_of_columns(&e, None, ridge).unwrap();
            let m = c.matrix();
            proptest::prop_assert!((m - m.transpose()).amax() <= 1e-10);
            let eig = m.clone().symmetric_eigenvalues();
            proptest::prop_assert!(eig.min() >= ridge - 1e-10);
            for i in 0..5 {
                proptest::prop_assert!((m[(i, i)] - (1.0 + ridge)).abs() < 1e-12);
            }
        }

        #[test]
        fn standardization_invariance(seed in 0u64..10_000, dim in 0usize..4, scale in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let e = random(4, 10, &mut rng);
            let mut scaled = e.clone();
            scaled.row_mut(dim).scale_mut(scale);
            let a = correlation_of_columns(&e, None, 0.0).unwrap();
            let b = correlation_of_columns(&scaled, None, 0.0).unwrap();
            proptest::prop_assert!((a.matrix() - b.matrix()).amax() < 1e-12);
        }

        #[test]
        fn quadratic_forms_are_non_negative(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = correlation_of_columns(&random(6, 4, &mut rng), None, 1e-3).unwrap();
            let d = mahalanobis_diag(&random(6, 20, &mut rng), &c).unwrap();
            proptest::prop_assert!(d.iter().all(|v| *v >= 0.0));
        }

        /// Gating a patch and its approximation by a binary scalar is the same
        /// as gating the squared error.
        #[test]
        fn binary_gate_factors_out_of_squared_error(
            p in proptest::collection::vec(-1.0f64..1.0, 12),
            approx in proptest::collection::vec(-1.0f64..1.0, 12),
            h in proptest::bool::ANY,
        ) {
            let h = if h { 1.0 } else { 0.0 };
            let gated: f64 = p.iter().zip(&approx).map(|(a, b)| (a * h - b * h).powi(2)).sum();
            let plain: f64 = p.iter().zip(&approx).map(|(a, b)| (a - b).powi(2)).sum::<f64>() * h;
            proptest::prop_assert!((gated - plain).abs() <= 1e-12);
        }
    }
}
