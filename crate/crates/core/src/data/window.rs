use crate::diffcore::{Rng, Scalar, Tensor};
use crate::error::{Error, Result};

use super::Dataset;

/// Samples per window: `round(t_win·fs)`.
pub fn window_len(t_win_s: f64, fs: f64) -> usize {
    (t_win_s * fs).round() as usize
}

/// Splits a prepared dataset into a leading training part and a trailing
/// test part in the ratio `train_parts : test_parts`.
pub fn split_train_test(d: &Dataset, train_parts: u32, test_parts: u32) -> Result<(Dataset, Dataset)> {
    d.check_aligned()?;
    if train_parts == 0 {
        return Err(Error::config("split ratio needs a nonzero training part"));
    }
    let n = d.n_samples();
    let cut = (n as u128 * train_parts as u128 / (train_parts as u128 + test_parts as u128)) as usize;
    if cut == 0 {
        return Err(Error::data(format!("{n} samples leave an empty training segment")));
    }
    let part = |a: usize, b: usize| -> Result<Dataset> {
        Ok(Dataset {
            eeg: d.eeg.slice(a, b)?,
            fmri: d.fmri.slice(a, b)?,
            subject_id: d.subject_id.clone(),
            provenance: d.provenance,
        })
    };
    Ok((part(0, cut)?, part(cut, n)?))
}

/// Aligned EEG and ROI windows sharing one start index.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowPair<S = f32> {
    /// EEG window `[C × W]`.
    pub x: Tensor<S>,
    /// ROI window `[R × W]`.
    pub y: Tensor<S>,
    pub start: usize,
}

fn cut<S: Scalar>(x: &crate::signal_prep::TimeSeries, start: usize, len: usize) -> Result<Tensor<S>> {
    let data = x
        .channels()
        .flat_map(|c| c[start..start + len].iter().map(|&v| S::from_f64(v)))
        .collect();
    Tensor::new(vec![x.n_channels(), len], data)
}

/// Window `[start, start + len)` of both series.
pub fn extract_window<S: Scalar>(d: &Dataset, start: usize, len: usize) -> Result<WindowPair<S>> {
    d.check_aligned()?;
    if len == 0 || start + len > d.n_samples() {
        return Err(Error::dim(format!(
            "window {start}..{} exceeds a {}-sample segment",
            start + len,
            d.n_samples()
        )));
    }
    Ok(WindowPair {
        x: cut(&d.eeg, start, len)?,
        y: cut(&d.fmri, start, len)?,
        start,
    })
}

/// `n` windows with start indices uniform over `[0, L − len]`.
pub fn sample_windows<S: Scalar>(d: &Dataset, n: usize, len: usize, rng: &mut Rng) -> Result<Vec<WindowPair<S>>> {
    let l = d.n_samples();
    if len == 0 || l < len {
        return Err(Error::data(format!(
            "segment of {l} samples is shorter than the {len}-sample window"
        )));
    }
    (0..n)
        .map(|_| {
            let start = rng.below((l - len + 1) as u64) as usize;
            extract_window(d, start, len)
        })
        .collect()
}

/// Non-overlapping window starts `0, len, 2·len, …` that fit in `n` samples.
/// With `cover_tail`, a final window aligned to the end is added when the
/// tiling leaves samples uncovered.
pub fn tile_starts(n: usize, len: usize, cover_tail: bool) -> Vec<usize> {
    if len == 0 || n < len {
        return Vec::new();
    }
    let mut starts: Vec<usize> = (0..n / len).map(|i| i * len).collect();
    if cover_tail && n % len != 0 {
        starts.push(n - len);
    }
    starts
}
