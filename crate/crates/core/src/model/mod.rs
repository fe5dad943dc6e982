//! The EEG→ROI network: a pointwise sine-activated MLP over the EEG channel
//! vector, a max-pooling convolutional encoder and a mirrored upsampling
//! decoder.

mod check;
mod checkpoint;
mod config;
mod forward;
mod params;

pub use check::{gradcheck_config, model_grad_check};
pub use checkpoint::{load_checkpoint, save_checkpoint, ModelCheckpoint, MODEL_MAGIC};
pub use config::ModelConfig;
pub use forward::{
    decoder_forward, encoder_forward, model_forward, model_forward_on_tape, siren_forward,
};
pub use params::{param_layout, siren_init, ModelParams, ParamSpec, ParamVars};
