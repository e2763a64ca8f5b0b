//! Patch classification by competing dictionary fidelities, and ROC analysis.

use std::cmp::Ordering;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::imaging::{ClassLabel, PatchSet, PatchVector};
use crate::sparse::{batch_omp_codes, omp, Dictionary, GramCache};
use crate::stats::{mahalanobis_diag, CorrelationMatrix};

/// Norm used to compare a patch's two approximation errors.
#[derive(Debug, Clone)]
pub enum ClassifierMetric {
    /// `eᵀC⁻¹e` with one correlation matrix per class.
    Correlation {
        c1: CorrelationMatrix,
        c2: CorrelationMatrix,
    },
    /// Plain squared Euclidean norm.
    L2,
}

impl ClassifierMetric {
    fn check(&self, dim: usize) -> Result<()> {
        if let ClassifierMetric::Correlation { c1, c2 } = self {
            if c1.dim() != dim || c2.dim() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "metrics of size {} and {} for patches of dimension {dim}",
                    c1.dim(),
                    c2.dim()
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of [`classify_patch`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub label: ClassLabel,
    /// `fid₂ - fid₁`; positive favours the foreground.
    pub score: f64,
    pub fid1: f64,
    pub fid2: f64,
}

impl Classification {
    fn from_fidelities(fid1: f64, fid2: f64) -> Self {
        let score = fid2 - fid1;
        let label = if score > 0.0 {
            ClassLabel::Foreground
        } else {
            ClassLabel::Background
        };
        Self {
            label,
            score,
            fid1,
            fid2,
        }
    }
}

fn check_dictionaries(d1: &Dictionary, d2: &Dictionary, dim: usize) -> Result<()> {
    if d1.geometry() != d2.geometry() || d1.dim() != dim {
        return Err(Error::DimensionMismatch(format!(
            "patch dimension {dim}, dictionaries {:?} and {:?}",
            d1.geometry(),
            d2.geometry()
        )));
    }
    Ok(())
}

fn error_vector(dict: &Dictionary, signal: &[f64], sparsity: usize) -> Result<Vec<f64>> {
    let recon = omp(dict, signal, sparsity)?.reconstruct(dict);
    Ok(signal.iter().zip(&recon).map(|(p, r)| p - r).collect())
}

/// Labels one patch by whichever dictionary approximates it with the smaller
/// error norm; ties go to the background.
pub fn classify_patch(
    patch: &PatchVector,
    d1: &Dictionary,
    d2: &Dictionary,
    metric: &ClassifierMetric,
    sparsity: usize,
) -> Result<Classification> {
    if patch.geometry() != d1.geometry() {
        return Err(Error::DimensionMismatch(format!(
            "patch geometry {:?} against dictionary geometry {:?}",
            patch.geometry(),
            d1.geometry()
        )));
    }
    check_dictionaries(d1, d2, patch.values.len())?;
    metric.check(patch.values.len())?;
    let e1 = error_vector(d1, &patch.values, sparsity)?;
    let e2 = error_vector(d2, &patch.values, sparsity)?;
    let (fid1, fid2) = match metric {
        ClassifierMetric::Correlation { c1, c2 } => {
            (c1.quadratic_form(&e1)?, c2.quadratic_form(&e2)?)
        }
        ClassifierMetric::L2 => (
            e1.iter().map(|v| v * v).sum(),
            e2.iter().map(|v| v * v).sum(),
        ),
    };
    Ok(Classification::from_fidelities(fid1, fid2))
}

/// [`classify_patch`] for every column of a patch set, using Batch-OMP.
pub fn classify_patches(
    patches: &PatchSet,
    d1: &Dictionary,
    d2: &Dictionary,
    metric: &ClassifierMetric,
    sparsity: usize,
) -> Result<Vec<Classification>> {
    check_dictionaries(d1, d2, patches.values.nrows())?;
    metric.check(patches.values.nrows())?;
    let mut errors = Vec::with_capacity(2);
    for dict in [d1, d2] {
        let codes = batch_omp_codes(dict, &patches.values, sparsity, Some(&GramCache::new(dict)))?;
        let mut e = patches.values.clone();
        for (n, code) in codes.iter().enumerate() {
            let mut col = e.column_mut(n);
            for &j in &code.support {
                col.axpy(-code.coefficients[j], &dict.atoms().column(j), 1.0);
            }
        }
        errors.push(e);
    }
    let (fid1, fid2) = match metric {
        ClassifierMetric::Correlation { c1, c2 } => (
            mahalanobis_diag(&errors[0], c1)?,
            mahalanobis_diag(&errors[1], c2)?,
        ),
        ClassifierMetric::L2 => (
            errors[0].column_iter().map(|c| c.norm_squared()).collect(),
            errors[1].column_iter().map(|c| c.norm_squared()).collect(),
        ),
    };
    Ok(fid1
        .iter()
        .zip(&fid2)
        .map(|(&a, &b)| Classification::from_fidelities(a, b))
        .collect())
}

/// Receiver operating characteristic of a score threshold sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// `+∞`, the distinct scores in decreasing order, then `-∞`.
    pub thresholds: Vec<f64>,
    /// `(FPR, TPR)` at each threshold.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl RocCurve {
    /// Rows `threshold,fpr,tpr` followed by an `# auc = ...` line.
    pub fn to_text(&self) -> String {
        let mut out = String::from("threshold,fpr,tpr\n");
        for (t, (f, p)) in self.thresholds.iter().zip(&self.points) {
            let _ = writeln!(out, "{t},{f},{p}");
        }
        let _ = writeln!(out, "# auc = {}", self.auc);
        out
    }
}

fn class_counts(scores: &[f64], labels: &[ClassLabel]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("classifier scores"));
    }
    let pos = labels
        .iter()
        .filter(|&&l| l == ClassLabel::Foreground)
        .count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::EmptyClass("ROC analysis needs both classes".into()));
    }
    Ok((pos, neg))
}

/// Sweeps thresholds over the distinct scores. A sample is predicted
/// positive (foreground) when its score exceeds the threshold; the area is
/// integrated with the trapezoid rule.
pub fn roc_curve(scores: &[f64], labels: &[ClassLabel]) -> Result<RocCurve> {
    let (pos, neg) = class_counts(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut thresholds = vec![f64::INFINITY];
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        // predictions at threshold `s` include everything strictly above it
        thresholds.push(s);
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == ClassLabel::Foreground {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
    }
    thresholds.push(f64::NEG_INFINITY);
    points.push((1.0, 1.0));

    let auc = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) * 0.5)
        .sum::<f64>()
        .clamp(0.0, 1.0);
    Ok(RocCurve {
        thresholds,
        points,
        auc,
    })
}

/// Probability that a random foreground sample outscores a random
/// background one, ties counting one half.
pub fn mann_whitney_auc(scores: &[f64], labels: &[ClassLabel]) -> Result<f64> {
    let (pos, neg) = class_counts(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let mid_rank = (i + j + 1) as f64 / 2.0;
        for &n in &order[i..j] {
            if labels[n] == ClassLabel::Foreground {
                rank_sum += mid_rank;
            }
        }
        i = j;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::PatchGeometry;
    use crate::stats::correlation_of_columns;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use ClassLabel::{Background as B, Foreground as F};

    fn random_dict(rng: &mut ChaCha8Rng, geometry: PatchGeometry, n: usize) -> Dictionary {
        Dictionary::from_unnormalized(
            DMatrix::from_fn(geometry.dim(), n, |_, _| rng.random::<f64>() - 0.5),
            geometry,
        )
        .unwrap()
    }

    fn vector(values: Vec<f64>, geometry: PatchGeometry) -> PatchVector {
        PatchVector {
            values,
            center: (0, 0),
            patch_size: geometry.patch_size,
            channels: geometry.channels,
        }
    }

    #[test]
    fn spanned_patch_goes_to_first_class() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = PatchGeometry::new(3, 1).unwrap();
        let d1 = random_dict(&mut rng, g, 12);
        let d2 = random_dict(&mut rng, g, 12);
        let v: Vec<f64> = (0..9)
            .map(|i| 0.7 * d1.atoms()[(i, 2)] - 0.4 * d1.atoms()[(i, 9)])
            .collect();
        let c = classify_patch(&vector(v, g), &d1, &d2, &ClassifierMetric::L2, 2).unwrap();
        assert_eq!(c.label, F);
        assert!(c.score > 0.0);
        assert!(c.fid1 < 1e-20);
    }

    #[test]
    fn tie_goes_to_background() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = PatchGeometry::new(2, 1).unwrap();
        let d = random_dict(&mut rng, g, 6);
        let c = CorrelationMatrix::identity(4, 1e-3);
        let metric = ClassifierMetric::Correlation {
            c1: c.clone(),
            c2: c,
        };
        let out =
            classify_patch(&vector(vec![0.1, 0.5, -0.2, 0.3], g), &d, &d, &metric, 1).unwrap();
        assert_eq!(out.score, 0.0);
        assert_eq!(out.label, B);
    }

    #[test]
    fn geometry_mismatch_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = random_dict(&mut rng, PatchGeometry::new(2, 1).unwrap(), 6);
        let p = vector(vec![0.0; 9], PatchGeometry::new(3, 1).unwrap());
        assert!(classify_patch(&p, &d, &d, &ClassifierMetric::L2, 1).is_err());
        let bad = ClassifierMetric::Correlation {
            c1: CorrelationMatrix::identity(3, 0.0),
            c2: CorrelationMatrix::identity(4, 0.0),
        };
        let p = vector(vec![0.0; 4], PatchGeometry::new(2, 1).unwrap());
        assert!(classify_patch(&p, &d, &d, &bad, 1).is_err());
    }

    /// Independent classifier: exhaustive best-subset search stands in for
    /// OMP when ρ = 1, and quadratic forms use an explicit inverse.
    #[test]
    fn batch_and_single_match_naive_classifier() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = PatchGeometry::new(2, 2).unwrap();
        let d1 = random_dict(&mut rng, g, 10);
        let d2 = random_dict(&mut rng, g, 10);
        let samples = DMatrix::from_fn(8, 400, |_, _| rng.random::<f64>() - 0.5);
        let c1 = correlation_of_columns(
            &DMatrix::from_fn(8, 40, |_, _| rng.random::<f64>()),
            None,
            1e-2,
        )
        .unwrap();
        let c2 = correlation_of_columns(
            &DMatrix::from_fn(8, 40, |_, _| rng.random::<f64>()),
            None,
            1e-2,
        )
        .unwrap();
        let metric = ClassifierMetric::Correlation {
            c1: c1.clone(),
            c2: c2.clone(),
        };
        let set = PatchSet {
            values: samples.clone(),
            centers: vec![(0, 0); 400],
            geometry: g,
        };
        let batch = classify_patches(&set, &d1, &d2, &metric, 1).unwrap();
        assert_eq!(batch.len(), 400);
        let naive_err = |d: &Dictionary, x: &[f64]| -> Vec<f64> {
            let mut best = (f64::INFINITY, vec![]);
            for j in 0..d.n_atoms() {
                let a = d.atoms().column(j);
                let coef: f64 = a.iter().zip(x).map(|(u, v)| u * v).sum();
                let e: Vec<f64> = x.iter().zip(a.iter()).map(|(v, u)| v - coef * u).collect();
                let r: f64 = e.iter().map(|v| v * v).sum();
                if r < best.0 {
                    best = (r, e);
                }
            }
            best.1
        };
        let quad = |c: &CorrelationMatrix, e: &[f64]| {
            let inv = c.matrix().clone().try_inverse().unwrap();
            let v = nalgebra::DVector::from_column_slice(e);
            (v.transpose() * inv * &v)[(0, 0)]
        };
        for (n, item) in batch.iter().enumerate() {
            let x: Vec<f64> = samples.column(n).iter().copied().collect();
            let f1 = quad(&c1, &naive_err(&d1, &x));
            let f2 = quad(&c2, &naive_err(&d2, &x));
            let expected = if f2 - f1 > 0.0 { F } else { B };
            assert_eq!(item.label, expected);
            let single = classify_patch(&vector(x, g), &d1, &d2, &metric, 1).unwrap();
            assert_eq!(single.label, expected);
            assert!((single.score - item.score).abs() < 1e-9);
        }
    }

    #[test]
    fn hand_counted_auc() {
        let roc = roc_curve(&[0.1, 0.4, 0.35, 0.8], &[B, B, F, F]).unwrap();
        assert!((roc.auc - 0.75).abs() < 1e-15);
        assert_eq!(roc.points.len(), 6);
        assert_eq!(roc.points[0], (0.0, 0.0));
        assert_eq!(*roc.points.last().unwrap(), (1.0, 1.0));
        assert!(
            (mann_whitney_auc(&[0.1, 0.4, 0.35, 0.8], &[B, B, F, F]).unwrap() - 0.75).abs() < 1e-15
        );
    }

    #[test]
    fn perfect_separation() {
        let roc = roc_curve(&[3.0, 2.0, -1.0, -2.0], &[F, F, B, B]).unwrap();
        assert_eq!(roc.auc, 1.0);
        assert!(roc.points.contains(&(0.0, 1.0)));
    }

    #[test]
    fn random_labels_give_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let scores: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
        let labels: Vec<ClassLabel> = (0..10_000)
            .map(|_| if rng.random::<bool>() { F } else { B })
            .collect();
        let auc = roc_curve(&scores, &labels).unwrap().auc;
        assert!((auc - 0.5).abs() < 0.02, "{auc}");
    }

    #[test]
    fn ties_and_text() {
        let scores = [1.0, 1.0, 1.0, 0.0];
        let labels = [F, B, F, B];
        let roc = roc_curve(&scores, &labels).unwrap();
        assert!((roc.auc - mann_whitney_auc(&scores, &labels).unwrap()).abs() < 1e-12);
        assert_eq!(roc.thresholds.len(), 2 + 2);
        let text = roc.to_text();
        assert!(text.starts_with("threshold,fpr,tpr\ninf,0,0\n"));
        assert!(text.contains("-inf,1,1\n# auc = "));
    }

    #[test]
    fn errors() {
        assert!(roc_curve(&[1.0, 2.0], &[F, F]).is_err());
        assert!(roc_curve(&[1.0], &[F, B]).is_err());
        assert!(roc_curve(&[f64::NAN, 1.0], &[F, B]).is_err());
        assert!(mann_whitney_auc(&[1.0, 2.0], &[B, B]).is_err());
    }

    fn labelled() -> impl proptest::strategy::Strategy<Value = (Vec<f64>, Vec<ClassLabel>)> {
        use proptest::prelude::*;
        proptest::collection::vec((-1e3f64..1e3, any::<bool>()), 2..80).prop_filter_map(
            "both classes",
            |v| {
                let labels: Vec<ClassLabel> =
                    v.iter().map(|&(_, b)| if b { F } else { B }).collect();
                let both = labels.contains(&F) && labels.contains(&B);
                both.then(|| (v.iter().map(|&(s, _)| s).collect(), labels))
            },
        )
    }

    proptest::proptest! {
        #[test]
        fn trapezoid_equals_rank_statistic((scores, labels) in labelled()) {
            let roc = roc_curve(&scores, &labels).unwrap();
            let mw = mann_whitney_auc(&scores, &labels).unwrap();
            proptest::prop_assert!((roc.auc - mw).abs() < 1e-9);
            proptest::prop_assert!((0.0..=1.0).contains(&roc.auc));
            for w in roc.points.windows(2) {
                proptest::prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
            }
        }

        #[test]
        fn monotone_transform_invariance((scores, labels) in labelled()) {
            let a = roc_curve(&scores, &labels).unwrap();
            let t: Vec<f64> = scores.iter().map(|s| (s / 100.0).exp() * 3.0 + 1.0).collect();
            let b = roc_curve(&t, &labels).unwrap();
            proptest::prop_assert_eq!(a.points, b.points);
            proptest::prop_assert!((a.auc - b.auc).abs() < 1e-12);
        }

        #[test]
        fn negated_scores_complement_auc((scores, labels) in labelled()) {
            let mut distinct = scores.clone();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            proptest::prop_assume!(distinct.len() == scores.len());
            let a = roc_curve(&scores, &labels).unwrap().auc;
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            let b = roc_curve(&neg, &labels).unwrap().auc;
            proptest::prop_assert!((a + b - 1.0).abs() < 1e-12);
        }

        #[test]
        fn label_depends_on_score_sign_only(f1 in 0.0f64..10.0, f2 in 0.0f64..10.0, s in 0.01f64..100.0) {
            let a = Classification::from_fidelities(f1, f2);
            let b = Classification::from_fidelities(f1 * s, f2 * s);
            proptest::prop_assert_eq!(a.label, b.label);
        }
    }
}
