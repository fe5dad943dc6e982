//! Predict region-of-interest fMRI time series from multi-channel EEG with a
//! sine-activated feature extractor feeding a convolutional encoder/decoder.

pub mod baselines;
pub mod container;
pub mod data;
pub mod diffcore;
pub mod error;
pub mod model;
pub mod objective;
pub mod signal_prep;
pub mod training;

pub use diffcore::{Mode, Rng, Scalar, Tape, Tensor, Var};
pub use error::{Error, Result};
