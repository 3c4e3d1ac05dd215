//! Sensor data containers, preprocessing, synthetic-data simulation, and
//! signal metrics.

mod csv;
mod filter;
mod metrics;
mod simulate;
mod welch;

pub use csv::{load_csv, write_csv};
pub use filter::{decimate, highpass};
pub use metrics::{rmse, trac};
pub use simulate::{simulate, GroundTruth, ImpactScenario, NoiseSpec, TriangularPulse};
pub use welch::{psd, PsdConfig};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::Observations;
use crate::structural::Quantity;

/// One named sensor channel with a per-sample validity mask.
#[derive(Debug, Clone)]
pub struct Channel {
    pub name: String,
    pub quantity: Quantity,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl Channel {
    pub fn new(name: impl Into<String>, quantity: Quantity, values: Vec<f64>) -> Self {
        let valid = vec![true; values.len()];
        Self {
            name: name.into(),
            quantity,
            values,
            valid,
        }
    }

    pub fn masked_count(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }
}

/// A set of equally sampled, equally long channels.
#[derive(Debug, Clone)]
pub struct TimeSeriesSet {
    /// Start time in seconds.
    pub t0: f64,
    /// Sampling rate in Hz.
    pub fs: f64,
    pub channels: Vec<Channel>,
}

impl TimeSeriesSet {
    pub fn new(t0: f64, fs: f64, channels: Vec<Channel>) -> Result<Self> {
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::InvalidInput("sampling rate must be positive".into()));
        }
        if channels.is_empty() {
            return Err(Error::InvalidInput("at least one channel is required".into()));
        }
        let n = channels[0].values.len();
        for ch in &channels {
            if ch.values.len() != n || ch.valid.len() != n {
                return Err(Error::InvalidInput(format!(
                    "channel '{}' has inconsistent length",
                    ch.name
                )));
            }
        }
        let mut names: Vec<&str> = channels.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("channel names must be unique".into()));
        }
        Ok(Self { t0, fs, channels })
    }

    pub fn n_samples(&self) -> usize {
        self.channels.first().map_or(0, |c| c.values.len())
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_samples())
            .map(|k| self.t0 + k as f64 / self.fs)
            .collect()
    }

    pub fn channel(&self, name: &str) -> Option<&Channel> {
        self.channels.iter().find(|c| c.name == name)
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.name == name)
    }

    /// Total number of masked samples across channels.
    pub fn masked_count(&self) -> usize {
        self.channels.iter().map(|c| c.masked_count()).sum()
    }

    /// Stacks the named channels (in the given order) into an observation
    /// matrix with validity mask.
    pub fn to_observations(&self, names: &[&str]) -> Result<Observations> {
        let n = self.n_samples();
        let mut values = DMatrix::zeros(names.len(), n);
        let mut valid = DMatrix::from_element(names.len(), n, true);
        let mut any_masked = false;
        for (row, name) in names.iter().enumerate() {
            let ch = self
                .channel(name)
                .ok_or_else(|| Error::InvalidInput(format!("unknown channel '{name}'")))?;
            for k in 0..n {
                values[(row, k)] = ch.values[k];
                valid[(row, k)] = ch.valid[k];
                any_masked |= !ch.valid[k];
            }
        }
        if any_masked {
            Observations::with_mask(values, valid)
        } else {
            Ok(Observations::new(values))
        }
    }

    /// Returns a copy with a subset of channels, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<TimeSeriesSet> {
        let channels = names
            .iter()
            .map(|name| {
                self.channel(name)
                    .cloned()
                    .ok_or_else(|| Error::InvalidInput(format!("unknown channel '{name}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        TimeSeriesSet::new(self.t0, self.fs, channels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_ragged_channels() {
        let a = Channel::new("a", Quantity::Acceleration, vec![1.0, 2.0]);
        let b = Channel::new("b", Quantity::Acceleration, vec![1.0]);
        assert!(TimeSeriesSet::new(0.0, 10.0, vec![a, b]).is_err());
    }

    #[test]
    fn rejects_duplicate_names() {
        let a = Channel::new("a", Quantity::Acceleration, vec![1.0]);
        let b = Channel::new("a", Quantity::Velocity, vec![2.0]);
        assert!(TimeSeriesSet::new(0.0, 10.0, vec![a, b]).is_err());
    }

    #[test]
    fn observations_carry_mask() {
        let mut a = Channel::new("a", Quantity::Acceleration, vec![1.0, 2.0, 3.0]);
        a.valid[1] = false;
        let ts = TimeSeriesSet::new(0.0, 1.0, vec![a]).unwrap();
        assert_eq!(ts.masked_count(), 1);
        let obs = ts.to_observations(&["a"]).unwrap();
        assert!(obs.is_valid(0, 0));
        assert!(!obs.is_valid(0, 1));
    }
}
