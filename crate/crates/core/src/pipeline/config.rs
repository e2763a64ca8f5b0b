use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::imaging::DatasetConfig;
use crate::level_set::SegParams;
use crate::sparse::{AtomInit, TrainConfig};

/// Error norm used by the patch classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierNorm {
    Correlation,
    L2,
}

impl FromStr for ClassifierNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "correlation" => Ok(Self::Correlation),
            "l2" => Ok(Self::L2),
            other => Err(Error::InvalidArgument(format!(
                "classifier norm '{other}' (expected correlation or l2)"
            ))),
        }
    }
}

impl ClassifierNorm {
    fn name(self) -> &'static str {
        match self {
            Self::Correlation => "correlation",
            Self::L2 => "l2",
        }
    }
}

/// Every tunable of the train / validate / segment pipeline.
///
/// The text form is one `key = value` per line; `#` starts a comment.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub patch_size: usize,
    pub channels: usize,
    pub atoms: usize,
    pub sparsity: usize,
    pub ksvd_iterations: usize,
    pub mu: f64,
    pub nu: f64,
    /// Narrow-band half-width; the circle radius when unset.
    pub tau: Option<f64>,
    pub radius: f64,
    pub spacing: f64,
    pub convergence_ratio: f64,
    pub patience: usize,
    pub ridge: f64,
    pub max_steps: usize,
    pub seed: u64,
    pub min_segment_area: usize,
    pub stride: usize,
    pub split_ratio: f64,
    pub balance: bool,
    pub intensity_scale: f64,
    pub heaviside_eps: f64,
    pub reinit_every: usize,
    pub reinit_sweeps: usize,
    pub classifier_norm: ClassifierNorm,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let seg = SegParams::default();
        let train = TrainConfig::default();
        let data = DatasetConfig::default();
        Self {
            patch_size: data.patch_size,
            channels: 3,
            atoms: train.n_atoms,
            sparsity: train.sparsity,
            ksvd_iterations: train.iterations,
            mu: seg.mu,
            nu: seg.nu,
            tau: None,
            radius: seg.radius,
            spacing: seg.spacing,
            convergence_ratio: seg.convergence_ratio,
            patience: seg.patience,
            ridge: seg.ridge,
            max_steps: seg.max_steps,
            seed: 0,
            min_segment_area: 25,
            stride: data.stride,
            split_ratio: data.split_ratio,
            balance: data.balance,
            intensity_scale: seg.intensity_scale,
            heaviside_eps: seg.heaviside_eps,
            reinit_every: seg.reinit_every,
            reinit_sweeps: seg.reinit_sweeps,
            classifier_norm: ClassifierNorm::Correlation,
        }
    }
}

/// Recognised keys, in the order they are written.
pub const KEYS: &[&str] = &[
    "patch-size",
    "channels",
    "atoms",
    "sparsity",
    "ksvd-iterations",
    "mu",
    "nu",
    "tau",
    "radius",
    "spacing",
    "convergence-ratio",
    "patience",
    "ridge",
    "max-steps",
    "seed",
    "min-segment-area",
    "stride",
    "split-ratio",
    "balance",
    "intensity-scale",
    "heaviside-eps",
    "reinit-every",
    "reinit-sweeps",
    "classifier-norm",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("cannot parse '{value}' for {key}")))
}

impl PipelineConfig {
    /// Applies one `key = value` setting. Underscores in keys are read as dashes.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('_', "-");
        let v = value.trim();
        let k = key.as_str();
        match k {
            "patch-size" => self.patch_size = parse(k, v)?,
            "channels" => self.channels = parse(k, v)?,
            "atoms" => self.atoms = parse(k, v)?,
            "sparsity" => self.sparsity = parse(k, v)?,
            "ksvd-iterations" => self.ksvd_iterations = parse(k, v)?,
            "mu" => self.mu = parse(k, v)?,
            "nu" => self.nu = parse(k, v)?,
            "tau" => self.tau = Some(parse(k, v)?),
            "radius" => self.radius = parse(k, v)?,
            "spacing" => self.spacing = parse(k, v)?,
            "convergence-ratio" => self.convergence_ratio = parse(k, v)?,
            "patience" => self.patience = parse(k, v)?,
            "ridge" => self.ridge = parse(k, v)?,
            "max-steps" => self.max_steps = parse(k, v)?,
            "seed" => self.seed = parse(k, v)?,
            "min-segment-area" => self.min_segment_area = parse(k, v)?,
            "stride" => self.stride = parse(k, v)?,
            "split-ratio" => self.split_ratio = parse(k, v)?,
            "balance" => self.balance = parse(k, v)?,
            "intensity-scale" => self.intensity_scale = parse(k, v)?,
            "heaviside-eps" => self.heaviside_eps = parse(k, v)?,
            "reinit-every" => self.reinit_every = parse(k, v)?,
            "reinit-sweeps" => self.reinit_sweeps = parse(k, v)?,
            "classifier-norm" => self.classifier_norm = v.parse()?,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown configuration key '{key}'"
                )))
            }
        }
        Ok(())
    }

    /// Defaults overridden by the settings in `text`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(key, value)
                .map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Every key with its effective value, parseable by [`Self::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let values: [String; 24] = [
            self.patch_size.to_string(),
            self.channels.to_string(),
            self.atoms.to_string(),
            self.sparsity.to_string(),
            self.ksvd_iterations.to_string(),
            self.mu.to_string(),
            self.nu.to_string(),
            self.effective_tau().to_string(),
            self.radius.to_string(),
            self.spacing.to_string(),
            self.convergence_ratio.to_string(),
            self.patience.to_string(),
            self.ridge.to_string(),
            self.max_steps.to_string(),
            self.seed.to_string(),
            self.min_segment_area.to_string(),
            self.stride.to_string(),
            self.split_ratio.to_string(),
            self.balance.to_string(),
            self.intensity_scale.to_string(),
            self.heaviside_eps.to_string(),
            self.reinit_every.to_string(),
            self.reinit_sweeps.to_string(),
            self.classifier_norm.name().to_string(),
        ];
        for (k, v) in KEYS.iter().zip(values) {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn effective_tau(&self) -> f64 {
        self.tau.unwrap_or(self.radius)
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.channels == 0 || self.atoms == 0 || self.sparsity == 0 {
            return Err(Error::InvalidArgument(
                "patch-size, channels, atoms and sparsity must be positive".into(),
            ));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "channels = {} (expected 1 or 3)",
                self.channels
            )));
        }
        if self.sparsity > self.atoms {
            return Err(Error::InvalidArgument(format!(
                "sparsity {} exceeds the atom count {}",
                self.sparsity, self.atoms
            )));
        }
        if self.stride == 0 {
            return Err(Error::InvalidArgument("stride must be positive".into()));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "split-ratio = {}",
                self.split_ratio
            )));
        }
        self.seg_params().validate()
    }

    pub fn seg_params(&self) -> SegParams {
        SegParams {
            mu: self.mu,
            nu: self.nu,
            tau: self.effective_tau(),
            heaviside_eps: self.heaviside_eps,
            convergence_ratio: self.convergence_ratio,
            patience: self.patience,
            max_steps: self.max_steps,
            radius: self.radius,
            spacing: self.spacing,
            ridge: self.ridge,
            intensity_scale: self.intensity_scale,
            reinit_every: self.reinit_every,
            reinit_sweeps: self.reinit_sweeps,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            n_atoms: self.atoms,
            sparsity: self.sparsity,
            iterations: self.ksvd_iterations,
            init: AtomInit::RandomSamples,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            patch_size: self.patch_size,
            stride: self.stride,
            balance: self.balance,
            split_ratio: self.split_ratio,
            seed: self.seed,
        }
    }
}
