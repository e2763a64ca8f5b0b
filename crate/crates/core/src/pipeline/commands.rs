use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;

use super::config::{ClassifierNorm, PipelineConfig};
use super::metrics::{compute_iou, post_process};
use crate::classify::{classify_patches, roc_curve, ClassifierMetric, RocCurve};
use crate::error::{Error, Result};
use crate::imaging::{
    build_dataset, render_overlay, BinaryMask, ClassLabel, Dataset, ImageBuffer, PatchSet,
    PatchVector,
};
use crate::level_set::{evolve_chan_vese, evolve_fields, trace_csv, CvMode, EvolveOutcome};
use crate::sparse::{batch_omp, ksvd_train, Dictionary};
use crate::stats::{approximation_errors, correlation_matrix, fidelity_fields};

/// Converts an image to the requested channel count (luma for one channel).
pub fn with_channels(image: &ImageBuffer, channels: usize) -> Result<ImageBuffer> {
    match (image.channels(), channels) {
        (a, b) if a == b => Ok(image.clone()),
        (1, 3) => Ok(image.to_rgb()),
        (3, 1) => {
            let (r, g, b) = (image.plane(0), image.plane(1), image.plane(2));
            let data = (0..image.pixel_count())
                .map(|n| (0.299 * r[n] + 0.587 * g[n] + 0.114 * b[n]).clamp(0.0, 1.0))
                .collect();
            ImageBuffer::new(image.width(), image.height(), 1, data)
        }
        (_, c) => Err(Error::InvalidArgument(format!(
            "cannot convert to {c} channels"
        ))),
    }
}

/// Errors of every column of `set` under its own sparse code.
pub fn coding_errors(set: &PatchSet, dict: &Dictionary, sparsity: usize) -> Result<DMatrix<f64>> {
    let codes = batch_omp(dict, &set.values, sparsity)?;
    Ok(approximation_errors(set, dict, &codes)?.values)
}

/// Dictionaries learned from one annotated image.
#[derive(Debug, Clone)]
pub struct TrainedPair {
    pub d1: Dictionary,
    pub d2: Dictionary,
    pub dataset: Dataset,
    pub objective1: Vec<f64>,
    pub objective2: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Builds the dataset and trains one dictionary per class on its training split.
pub fn train_dictionaries(
    image: &ImageBuffer,
    fg: &BinaryMask,
    bg: &BinaryMask,
    cfg: &PipelineConfig,
) -> Result<TrainedPair> {
    cfg.validate()?;
    let image = with_channels(image, cfg.channels)?;
    let dataset = build_dataset(&image, fg, bg, &cfg.dataset_config())?;
    let train = cfg.train_config();
    let r1 = ksvd_train(
        &dataset.train_set(ClassLabel::Foreground).values,
        dataset.geometry(),
        &train,
    )?;
    let r2 = ksvd_train(
        &dataset.train_set(ClassLabel::Background).values,
        dataset.geometry(),
        &train,
    )?;
    let warnings = [("foreground", &r1.warnings), ("background", &r2.warnings)]
        .iter()
        .flat_map(|(class, w)| w.iter().map(move |m| format!("{class}: {m}")))
        .collect();
    Ok(TrainedPair {
        warnings,
        d1: r1.dictionary,
        d2: r2.dictionary,
        dataset,
        objective1: r1.objective_trace,
        objective2: r2.objective_trace,
    })
}

/// Counts and final objectives of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub candidates: (usize, usize),
    pub train: (usize, usize),
    pub test: (usize, usize),
    pub final_objective: (f64, f64),
    pub warnings: Vec<String>,
    pub config: PipelineConfig,
}

impl TrainSummary {
    fn from_pair(pair: &TrainedPair, cfg: &PipelineConfig) -> Self {
        let d = &pair.dataset;
        let last = |t: &[f64]| t.last().copied().unwrap_or(f64::NAN);
        Self {
            candidates: d.candidates,
            train: (
                d.train_count(ClassLabel::Foreground),
                d.train_count(ClassLabel::Background),
            ),
            test: (
                d.test_count(ClassLabel::Foreground),
                d.test_count(ClassLabel::Background),
            ),
            final_objective: (last(&pair.objective1), last(&pair.objective2)),
            warnings: pair.warnings.clone(),
            config: cfg.clone(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "candidates_fg = {}", self.candidates.0);
        let _ = writeln!(out, "candidates_bg = {}", self.candidates.1);
        let _ = writeln!(out, "train_fg = {}", self.train.0);
        let _ = writeln!(out, "train_bg = {}", self.train.1);
        let _ = writeln!(out, "test_fg = {}", self.test.0);
        let _ = writeln!(out, "test_bg = {}", self.test.1);
        let _ = writeln!(out, "objective_fg = {}", self.final_objective.0);
        let _ = writeln!(out, "objective_bg = {}", self.final_objective.1);
        for w in &self.warnings {
            let _ = writeln!(out, "warning = {w}");
        }
        out.push_str("# configuration\n");
        out.push_str(&self.config.to_text());
        out
    }
}

/// Trains both dictionaries and writes `dict1.json`, `dict2.json` and
/// `train_summary.txt` into `out_dir`.
pub fn cmd_train(
    image: &Path,
    fg_mask: &Path,
    bg_mask: &Path,
    out_dir: &Path,
    cfg: &PipelineConfig,
) -> Result<TrainSummary> {
    let img = ImageBuffer::load(image)?;
    let fg = BinaryMask::load(fg_mask)?;
    let bg = BinaryMask::load(bg_mask)?;
    let pair = train_dictionaries(&img, &fg, &bg, cfg)?;
    std::fs::create_dir_all(out_dir)?;
    pair.d1.save(out_dir.join("dict1.json"))?;
    pair.d2.save(out_dir.join("dict2.json"))?;
    let summary = TrainSummary::from_pair(&pair, cfg);
    std::fs::write(out_dir.join("train_summary.txt"), summary.to_text())?;
    Ok(summary)
}

/// ROC analysis of the held-out patches.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub roc: RocCurve,
    pub test_counts: (usize, usize),
    pub accuracy: f64,
}

impl ValidationReport {
    pub fn passes(&self, min_auc: f64) -> bool {
        self.roc.auc >= min_auc
    }
}

fn patches_of(items: &[&PatchVector], dataset: &Dataset) -> Result<PatchSet> {
    PatchSet::from_vectors(items, dataset.geometry())
}

/// Scores the test split of the dataset rebuilt from `cfg`. Correlation
/// matrices come from each class's training patches under its own dictionary.
pub fn validate_dictionaries(
    d1: &Dictionary,
    d2: &Dictionary,
    image: &ImageBuffer,
    fg: &BinaryMask,
    bg: &BinaryMask,
    cfg: &PipelineConfig,
) -> Result<ValidationReport> {
    cfg.validate()?;
    let image = with_channels(image, d1.geometry().channels)?;
    let data_cfg = crate::imaging::DatasetConfig {
        patch_size: d1.geometry().patch_size,
        ..cfg.dataset_config()
    };
    let dataset = build_dataset(&image, fg, bg, &data_cfg)?;
    let metric = match cfg.classifier_norm {
        ClassifierNorm::L2 => ClassifierMetric::L2,
        ClassifierNorm::Correlation => {
            let e1 = coding_errors(&dataset.train_set(ClassLabel::Foreground), d1, cfg.sparsity)?;
            let e2 = coding_errors(&dataset.train_set(ClassLabel::Background), d2, cfg.sparsity)?;
            let wrap = |e: DMatrix<f64>| {
                crate::stats::ErrorMatrix::new(e.clone(), vec![(0, 0); e.ncols()])
            };
            ClassifierMetric::Correlation {
                c1: correlation_matrix(&wrap(e1)?, cfg.ridge)?,
                c2: correlation_matrix(&wrap(e2)?, cfg.ridge)?,
            }
        }
    };
    let items: Vec<&PatchVector> = dataset.test.iter().map(|p| &p.patch).collect();
    let labels: Vec<ClassLabel> = dataset.test.iter().map(|p| p.label).collect();
    let set = patches_of(&items, &dataset)?;
    let results = classify_patches(&set, d1, d2, &metric, cfg.sparsity)?;
    let scores: Vec<f64> = results.iter().map(|c| c.score).collect();
    let correct = results
        .iter()
        .zip(&labels)
        .filter(|(c, l)| c.label == **l)
        .count();
    Ok(ValidationReport {
        roc: roc_curve(&scores, &labels)?,
        test_counts: (
            dataset.test_count(ClassLabel::Foreground),
            dataset.test_count(ClassLabel::Background),
        ),
        accuracy: correct as f64 / labels.len() as f64,
    })
}

/// Loads dictionaries and annotations, validates, and optionally writes the ROC.
#[allow(clippy::too_many_arguments)]
pub fn cmd_validate(
    dict1: &Path,
    dict2: &Path,
    image: &Path,
    fg_mask: &Path,
    bg_mask: &Path,
    cfg: &PipelineConfig,
    roc_out: Option<&Path>,
) -> Result<ValidationReport> {
    let d1 = Dictionary::load(dict1)?;
    let d2 = Dictionary::load(dict2)?;
    let report = validate_dictionaries(
        &d1,
        &d2,
        &ImageBuffer::load(image)?,
        &BinaryMask::load(fg_mask)?,
        &BinaryMask::load(bg_mask)?,
        cfg,
    )?;
    if let Some(path) = roc_out {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, report.roc.to_text())?;
    }
    Ok(report)
}

/// Evolution followed by small-segment removal.
#[derive(Debug, Clone)]
pub struct Segmentation {
    pub outcome: EvolveOutcome,
    pub mask: BinaryMask,
}

pub fn segment_image(
    image: &ImageBuffer,
    d1: &Dictionary,
    d2: &Dictionary,
    cfg: &PipelineConfig,
) -> Result<Segmentation> {
    cfg.validate()?;
    if image.channels() != d1.geometry().channels {
        return Err(Error::DimensionMismatch(format!(
            "image has {} channel(s), dictionaries expect {}",
            image.channels(),
            d1.geometry().channels
        )));
    }
    let fields = fidelity_fields(image, d1, d2, cfg.sparsity)?;
    let outcome = evolve_fields(&fields, &cfg.seg_params())?;
    let mask = post_process(&outcome.mask, cfg.min_segment_area);
    Ok(Segmentation { outcome, mask })
}

/// Files and figures of one segmentation run.
#[derive(Debug, Clone)]
pub struct SegmentationReport {
    pub mask_path: PathBuf,
    pub overlay_path: PathBuf,
    pub trace_path: PathBuf,
    pub iou: Option<f64>,
    pub steps: usize,
    pub converged: bool,
    pub wall_time_s: f64,
    pub warnings: Vec<String>,
}

impl SegmentationReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "mask = {}", self.mask_path.display());
        let _ = writeln!(out, "overlay = {}", self.overlay_path.display());
        let _ = writeln!(out, "trace = {}", self.trace_path.display());
        if let Some(iou) = self.iou {
            let _ = writeln!(out, "iou = {iou}");
        }
        let _ = writeln!(out, "steps = {}", self.steps);
        let _ = writeln!(out, "converged = {}", self.converged);
        let _ = writeln!(out, "wall_time_s = {:.3}", self.wall_time_s);
        for w in &self.warnings {
            let _ = writeln!(out, "warning = {w}");
        }
        out
    }
}

fn load_gt(path: Option<&Path>, image: &ImageBuffer) -> Result<Option<BinaryMask>> {
    path.map(|p| {
        let m = BinaryMask::load(p)?;
        m.ensure_shape(image.width(), image.height())?;
        Ok(m)
    })
    .transpose()
}

/// Segments an image and writes `mask.png`, `overlay.png`, `trace.csv` and
/// `report.txt` into `out_dir`.
pub fn cmd_segment(
    image: &Path,
    dict1: &Path,
    dict2: &Path,
    out_dir: &Path,
    cfg: &PipelineConfig,
    gt_mask: Option<&Path>,
) -> Result<SegmentationReport> {
    let start = Instant::now();
    let d1 = Dictionary::load(dict1)?;
    let d2 = Dictionary::load(dict2)?;
    let img = with_channels(&ImageBuffer::load(image)?, d1.geometry().channels)?;
    let gt = load_gt(gt_mask, &img)?;
    let seg = segment_image(&img, &d1, &d2, cfg)?;
    std::fs::create_dir_all(out_dir)?;
    let report = SegmentationReport {
        mask_path: out_dir.join("mask.png"),
        overlay_path: out_dir.join("overlay.png"),
        trace_path: out_dir.join("trace.csv"),
        iou: gt.as_ref().map(|g| compute_iou(&seg.mask, g)).transpose()?,
        steps: seg.outcome.steps,
        converged: seg.outcome.converged,
        wall_time_s: start.elapsed().as_secs_f64(),
        warnings: seg.outcome.warnings.clone(),
    };
    seg.mask.save(&report.mask_path)?;
    render_overlay(&img, &seg.mask)?.save(&report.overlay_path)?;
    std::fs::write(&report.trace_path, trace_csv(&seg.outcome.trace))?;
    std::fs::write(out_dir.join("report.txt"), report.to_text())?;
    Ok(report)
}

/// One row of the method comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub method: &'static str,
    pub iou: f64,
    pub steps: usize,
    pub converged: bool,
}

/// Chan-Vese labels are symmetric, so the baseline is scored with whichever
/// polarity agrees better with the ground truth.
fn best_polarity(mask: &BinaryMask, gt: &BinaryMask, min_area: usize) -> Result<(BinaryMask, f64)> {
    let direct = post_process(mask, min_area);
    let flipped = post_process(&mask.complement(), min_area);
    let (a, b) = (compute_iou(&direct, gt)?, compute_iou(&flipped, gt)?);
    Ok(if b > a { (flipped, b) } else { (direct, a) })
}

/// Runs the dictionary method and two Chan-Vese baselines (vector-valued on
/// RGB, scalar on a*), writing per-method masks, overlays and `compare.csv`.
pub fn cmd_compare(
    image: &Path,
    dict1: &Path,
    dict2: &Path,
    out_dir: &Path,
    cfg: &PipelineConfig,
    gt_mask: &Path,
) -> Result<Vec<MethodResult>> {
    let d1 = Dictionary::load(dict1)?;
    let d2 = Dictionary::load(dict2)?;
    let raw = ImageBuffer::load(image)?;
    let img = with_channels(&raw, d1.geometry().channels)?;
    let rgb = with_channels(&raw, 3)?;
    let gt = load_gt(Some(gt_mask), &img)?.expect("ground truth was given");
    std::fs::create_dir_all(out_dir)?;

    let seg = segment_image(&img, &d1, &d2, cfg)?;
    let mut rows = vec![MethodResult {
        method: "lsksvd",
        iou: compute_iou(&seg.mask, &gt)?,
        steps: seg.outcome.steps,
        converged: seg.outcome.converged,
    }];
    let mut masks = vec![seg.mask];

    let params = cfg.seg_params();
    for (method, mode) in [("cv_vector", CvMode::Vector), ("cv_astar", CvMode::AStar)] {
        let out = evolve_chan_vese(&rgb, mode, 1.0, 1.0, &params)?;
        let (mask, iou) = best_polarity(&out.mask, &gt, cfg.min_segment_area)?;
        rows.push(MethodResult {
            method,
            iou,
            steps: out.steps,
            converged: out.converged,
        });
        masks.push(mask);
    }

    let mut csv = String::from("method,iou,steps,converged\n");
    for (row, mask) in rows.iter().zip(&masks) {
        mask.save(out_dir.join(format!("mask_{}.png", row.method)))?;
        render_overlay(&rgb, mask)?.save(out_dir.join(format!("overlay_{}.png", row.method)))?;
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            row.method, row.iou, row.steps, row.converged
        );
    }
    std::fs::write(out_dir.join("compare.csv"), csv)?;
    Ok(rows)
}
