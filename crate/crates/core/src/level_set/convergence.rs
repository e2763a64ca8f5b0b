use crate::error::{Error, Result};

/// Stops evolution once the relative area change stays below `ratio` for
/// `patience` consecutive steps.
#[derive(Debug, Clone)]
pub struct ConvergenceMonitor {
    ratio: f64,
    patience: usize,
    areas: Vec<f64>,
    counter: usize,
    last_ratio: Option<f64>,
}

impl ConvergenceMonitor {
    pub fn new(ratio: f64, patience: usize) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "convergence ratio {ratio} outside (0, 1)"
            )));
        }
        if patience == 0 {
            return Err(Error::InvalidArgument("patience must be at least 1".into()));
        }
        Ok(Self {
            ratio,
            patience,
            areas: Vec::new(),
            counter: 0,
            last_ratio: None,
        })
    }

    /// Records the foreground area `S_t`; returns whether evolution has converged.
    /// The relative change is `|S_t - S_{t-1}| / max(S_t, 1)`.
    pub fn observe(&mut self, area: f64) -> Result<bool> {
        if area < 0.0 || !area.is_finite() {
            return Err(Error::InvalidArgument(format!("foreground area {area}")));
        }
        self.last_ratio = self
            .areas
            .last()
            .map(|&prev| (area - prev).abs() / area.max(1.0));
        match self.last_ratio {
            Some(r) if r < self.ratio => self.counter = (self.counter + 1).min(self.patience),
            _ => self.counter = 0,
        }
        self.areas.push(area);
        Ok(self.converged())
    }

    pub fn converged(&self) -> bool {
        self.counter >= self.patience
    }

    pub fn counter(&self) -> usize {
        self.counter
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    /// Relative change of the latest observation, `None` before the second.
    pub fn last_ratio(&self) -> Option<f64> {
        self.last_ratio
    }
}
