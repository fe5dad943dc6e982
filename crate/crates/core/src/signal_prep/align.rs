use serde::{Deserialize, Serialize};

use super::TimeSeries;
use crate::error::{Error, Result};

/// Subtracts the instantaneous cross-channel mean from every channel.
pub fn rereference_average(x: &TimeSeries) -> Result<TimeSeries> {
    let c = x.n_channels();
    if c < 2 {
        return Err(Error::dim("average re-reference needs at least 2 channels"));
    }
    let n = x.n_samples();
    let mut mean = vec![0.0; n];
    for ch in x.channels() {
        for (m, v) in mean.iter_mut().zip(ch) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= c as f64;
    }
    let data = x
        .channels()
        .flat_map(|ch| ch.iter().zip(&mean).map(|(v, m)| v - m))
        .collect();
    TimeSeries::new(data, x.fs(), x.labels().to_vec())
}

/// Number of samples dropped by [`hrf_shift_align`].
pub fn shift_samples(delay_s: f64, fs: f64) -> usize {
    (delay_s * fs).round() as usize
}

/// Pairs EEG at time `t` with fMRI at `t + delay_s` by dropping the last
/// `d` EEG samples and the first `d` fMRI samples, `d = round(delay_s·fs)`.
pub fn hrf_shift_align(
    eeg: &TimeSeries,
    fmri: &TimeSeries,
    delay_s: f64,
) -> Result<(TimeSeries, TimeSeries)> {
    if eeg.fs() != fmri.fs() {
        return Err(Error::config(format!(
            "alignment needs equal rates, got EEG {} Hz and fMRI {} Hz",
            eeg.fs(),
            fmri.fs()
        )));
    }
    if !(delay_s >= 0.0) {
        return Err(Error::config(format!("delay must be ≥ 0, got {delay_s}")));
    }
    if eeg.n_samples() != fmri.n_samples() {
        return Err(Error::dim(format!(
            "alignment needs equal lengths, got EEG {} and fMRI {} samples",
            eeg.n_samples(),
            fmri.n_samples()
        )));
    }
    let d = shift_samples(delay_s, eeg.fs());
    let n = eeg.n_samples();
    if d >= n {
        return Err(Error::dim(format!(
            "delay of {d} samples leaves nothing of a {n}-sample series"
        )));
    }
    Ok((eeg.slice(0, n - d)?, fmri.slice(d, n)?))
}

/// Per-channel mean and population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZScoreStats {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

pub fn zscore_fit(train: &TimeSeries) -> ZScoreStats {
    let n = train.n_samples() as f64;
    let mut mean = Vec::with_capacity(train.n_channels());
    let mut sd = Vec::with_capacity(train.n_channels());
    for (label, ch) in train.labels().iter().zip(train.channels()) {
        let m = ch.iter().sum::<f64>() / n;
        let var = ch.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        let s = var.sqrt();
        let scale = ch.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if !(s > 1e-12 * scale.max(1.0)) {
            log::warn!("channel {label} is constant; its sd is clamped to 1");
            sd.push(1.0);
        } else {
            sd.push(s);
        }
        mean.push(m);
    }
    ZScoreStats { mean, sd }
}

pub fn zscore_apply(x: &TimeSeries, stats: &ZScoreStats) -> Result<TimeSeries> {
    if stats.mean.len() != x.n_channels() || stats.sd.len() != x.n_channels() {
        return Err(Error::dim(format!(
            "z-score stats cover {} channels, series has {}",
            stats.mean.len(),
            x.n_channels()
        )));
    }
    let mut i = 0;
    x.map_channels(x.fs(), |ch| {
        let (m, s) = (stats.mean[i], stats.sd[i]);
        i += 1;
        Ok(ch.iter().map(|v| (v - m) / s).collect())
    })
}
