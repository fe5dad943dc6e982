//! Dataset storage, train/test splitting, windowing and the synthetic
//! EEG/fMRI generator.

mod dataset;
mod synth;
mod window;

pub use dataset::{load_dataset, load_eeg, save_dataset, save_eeg, Dataset, DatasetMeta, Encoding, Provenance, FORMAT_VERSION};
pub use synth::{synth_generate, HrfParams, SynthConfig, SynthOutput, SynthTarget, ENVELOPE_FS};
pub use window::{extract_window, sample_windows, split_train_test, tile_starts, window_len, WindowPair};
