use crate::error::{Error, Result};

/// Uniform sampling grid `0, h, 2h, ..., horizon` shared by the stochastic and
/// fluid trajectories so their samples line up exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    /// Grid over `[0, horizon]` whose spacing is `sample_dt` rounded so that it
    /// divides the horizon.
    pub fn new(horizon: f64, sample_dt: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if !(sample_dt > 0.0) || !sample_dt.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sample interval must be positive, got {sample_dt}"
            )));
        }
        let intervals = (horizon / sample_dt).round().max(1.0) as usize;
        let times = (0..=intervals)
            .map(|k| horizon * k as f64 / intervals as f64)
            .collect();
        Ok(Self { times })
    }

    /// Default grid of 500 intervals.
    pub fn with_default_spacing(horizon: f64) -> Result<Self> {
        Self::new(horizon, horizon / 500.0)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("grid is never empty")
    }
}
