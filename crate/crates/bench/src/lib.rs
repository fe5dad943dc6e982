//! Shared fixtures for the criterion benches.

use neurosiren::data::{Dataset, Provenance, WindowPair};
use neurosiren::signal_prep::TimeSeries;
use neurosiren::{Rng, Tensor};

/// Standard normal tensor of the given shape.
pub fn normal_tensor(shape: &[usize], seed: u64) -> Tensor<f32> {
    let mut rng = Rng::new(seed);
    let n = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    Tensor::from_f64(shape, &data).expect("shape matches data")
}

/// Random multi-channel series.
pub fn noise_series(channels: usize, n: usize, fs: f64, seed: u64) -> TimeSeries {
    let mut rng = Rng::new(seed);
    let rows = (0..channels).map(|_| (0..n).map(|_| rng.normal()).collect()).collect();
    let labels = (0..channels).map(|c| format!("c{c}")).collect();
    TimeSeries::from_channels(rows, fs, labels).expect("rows are equal length")
}

/// Random aligned dataset at 100 Hz.
pub fn noise_dataset(eeg_channels: usize, rois: usize, n: usize, seed: u64) -> Dataset {
    Dataset {
        eeg: noise_series(eeg_channels, n, 100.0, seed),
        fmri: noise_series(rois, n, 100.0, seed + 1),
        subject_id: "bench".into(),
        provenance: Provenance::Synthetic,
    }
}

/// One random training window pair.
pub fn window(eeg_channels: usize, rois: usize, len: usize, seed: u64) -> WindowPair {
    WindowPair {
        x: normal_tensor(&[eeg_channels, len], seed),
        y: normal_tensor(&[rois, len], seed + 1),
        start: 0,
    }
}
