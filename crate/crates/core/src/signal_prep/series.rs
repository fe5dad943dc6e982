use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A channels × samples matrix sampled at `fs` Hz, stored row-major (one row
/// per channel).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    data: Vec<f64>,
    n_samples: usize,
    fs: f64,
    labels: Vec<String>,
}

impl TimeSeries {
    pub fn new(data: Vec<f64>, fs: f64, labels: Vec<String>) -> Result<Self> {
        if !(fs > 0.0) || !fs.is_finite() {
            return Err(Error::config(format!("sampling rate must be positive, got {fs}")));
        }
        if labels.is_empty() {
            return Err(Error::dim("time series needs at least one channel"));
        }
        if data.len() % labels.len() != 0 {
            return Err(Error::dim(format!(
                "{} values do not split into {} channels",
                data.len(),
                labels.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            let n = data.len() / labels.len();
            return Err(Error::data(format!(
                "non-finite value in channel {} at sample {}",
                labels[i / n],
                i % n
            )));
        }
        let n_samples = data.len() / labels.len();
        Ok(Self {
            data,
            n_samples,
            fs,
            labels,
        })
    }

    pub fn from_channels(channels: Vec<Vec<f64>>, fs: f64, labels: Vec<String>) -> Result<Self> {
        if channels.len() != labels.len() {
            return Err(Error::dim(format!(
                "{} channels but {} labels",
                channels.len(),
                labels.len()
            )));
        }
        if let Some(c) = channels.iter().find(|c| c.len() != channels[0].len()) {
            return Err(Error::dim(format!(
                "ragged channels: {} vs {} samples",
                c.len(),
                channels[0].len()
            )));
        }
        Self::new(channels.concat(), fs, labels)
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_channels(&self) -> usize {
        self.labels.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.n_samples..(c + 1) * self.n_samples]
    }

    pub fn channels(&self) -> impl Iterator<Item = &[f64]> {
        let n = self.n_samples;
        (0..self.labels.len()).map(move |c| &self.data[c * n..(c + 1) * n])
    }

    /// Applies `f` to every channel, producing a series of possibly different
    /// length at rate `fs`.
    pub fn map_channels(
        &self,
        fs: f64,
        mut f: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    ) -> Result<TimeSeries> {
        let out = self.channels().map(&mut f).collect::<Result<Vec<_>>>()?;
        TimeSeries::from_channels(out, fs, self.labels.clone())
    }

    /// Samples `[start, end)` of every channel.
    pub fn slice(&self, start: usize, end: usize) -> Result<TimeSeries> {
        if start > end || end > self.n_samples {
            return Err(Error::dim(format!(
                "slice {start}..{end} out of range for {} samples",
                self.n_samples
            )));
        }
        let data = self
            .channels()
            .flat_map(|c| c[start..end].iter().copied())
            .collect();
        Ok(TimeSeries {
            data,
            n_samples: end - start,
            fs: self.fs,
            labels: self.labels.clone(),
        })
    }
}
