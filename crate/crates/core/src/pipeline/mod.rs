//! Configuration, synthetic data and the end-to-end commands.

mod commands;
mod config;
mod metrics;
mod synth;

pub use commands::{
    cmd_compare, cmd_segment, cmd_train, cmd_validate, coding_errors, segment_image,
    train_dictionaries, validate_dictionaries, with_channels, MethodResult, Segmentation,
    SegmentationReport, TrainSummary, TrainedPair, ValidationReport,
};
pub use config::{ClassifierNorm, PipelineConfig, KEYS};
pub use metrics::{compute_iou, post_process};
pub use synth::{
    gen_synthetic, BlobLayout, Ellipse, Pattern, SynthConfig, SyntheticImage, TextureSpec,
};
