//! Conditioning of raw EEG and ROI series: filtering, re-referencing,
//! resampling, hemodynamic alignment and normalization.

mod align;
mod chain;
mod filter;
mod resample;
mod series;

pub use align::{hrf_shift_align, rereference_average, shift_samples, zscore_apply, zscore_fit, ZScoreStats};
pub use chain::{prepare, PrepConfig, PrepOutput, PrepStep};
pub use filter::{apply_filter, design_butterworth, filter_signal, FilterSpec, Section, Sos};
pub use resample::{rational_ratio, resample, resample_with, resampled_len, CubicSpline, ResampleOptions, MAX_DENOMINATOR};
pub use series::TimeSeries;
