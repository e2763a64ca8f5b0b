//! Level-set KSVD texture segmentation.
//!
//! Two class dictionaries are learned with KSVD from annotated patches of a
//! single image. Other images are segmented by evolving a level set whose
//! region forces are correlation-weighted dictionary approximation errors.
//!
//! The crate is organised bottom-up:
//!
//! * [`imaging`]: rasters, masks, patch extraction, dataset construction,
//!   CIELAB conversion and contour overlays.
//! * [`sparse`]: dictionaries, OMP / Batch-OMP and KSVD training.
//! * [`stats`]: approximation errors, correlation matrices and the
//!   Mahalanobis-style fidelity fields.
//! * [`level_set`]: the narrow-band evolution engine and Chan-Vese baselines.
//! * [`classify`]: the patch classifier used to validate dictionaries, with
//!   ROC / AUC analysis.
//! * [`pipeline`]: configuration, synthetic data, post-processing and the
//!   train / validate / segment / compare commands.

pub mod classify;
pub mod error;
pub mod imaging;
pub mod level_set;
pub mod pipeline;
pub mod sparse;
pub mod stats;

pub use classify::{
    classify_patch, mann_whitney_auc, roc_curve, Classification, ClassifierMetric, RocCurve,
};
pub use error::{Error, Result};
pub use imaging::{
    build_dataset, extract_patch, lab_a_channel, render_overlay, BinaryMask, ClassLabel, Dataset,
    DatasetConfig, ImageBuffer, PatchSet, PatchVector,
};
pub use level_set::{
    evolve, ConvergenceMonitor, EvolveOutcome, LevelSetField, SegParams, TraceRow,
};
pub use pipeline::{compute_iou, post_process, PipelineConfig};
pub use sparse::{batch_omp, ksvd_train, omp, Dictionary, SparseCode, TrainConfig};
pub use stats::{
    approximation_errors, correlation_matrix, fidelity_fields, mahalanobis_diag, CorrelationMatrix,
    ErrorMatrix, FidelityFields,
};
