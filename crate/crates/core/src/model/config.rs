use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architectural hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub n_eeg_channels: usize,
    pub n_rois: usize,
    /// Width `F` of every sine layer and of the SIREN projection output.
    pub siren_hidden_width: usize,
    /// Hidden sine layers after the input sine layer.
    pub siren_hidden_layers: usize,
    pub omega0: f64,
    pub encoder_blocks: usize,
    pub channel_widths: Vec<usize>,
    pub kernel_size: usize,
    pub dropout_rate: f64,
    pub window_len_samples: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_eeg_channels: 30,
            n_rois: 4,
            siren_hidden_width: 64,
            siren_hidden_layers: 1,
            omega0: 30.0,
            encoder_blocks: 4,
            channel_widths: vec![64, 128, 256, 256],
            kernel_size: 5,
            dropout_rate: 0.3,
            window_len_samples: 2048,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.encoder_blocks;
        if n == 0 {
            return Err(Error::config("model.encoder_blocks must be ≥ 1"));
        }
        if self.channel_widths.len() != n {
            return Err(Error::config(format!(
                "model.channel_widths has {} entries for {n} encoder blocks",
                self.channel_widths.len()
            )));
        }
        if self.channel_widths.contains(&0)
            || self.n_eeg_channels == 0
            || self.n_rois == 0
            || self.siren_hidden_width == 0
        {
            return Err(Error::config("model widths and channel counts must be positive"));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::config(format!(
                "model.kernel_size must be odd, got {}",
                self.kernel_size
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config(format!(
                "model.dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if !(self.omega0 > 0.0) {
            return Err(Error::config("model.omega0 must be > 0"));
        }
        let factor = 1usize.checked_shl(n as u32).unwrap_or(0);
        if factor == 0 || self.window_len_samples == 0 || self.window_len_samples % factor != 0 {
            return Err(Error::config(format!(
                "model.window_len_samples {} is not divisible by 2^{n}",
                self.window_len_samples
            )));
        }
        Ok(())
    }

    /// Length of the encoder output.
    pub fn latent_len(&self) -> usize {
        self.window_len_samples >> self.encoder_blocks
    }

    /// Output channels of each decoder block: the encoder's channel sequence
    /// mirrored, ending at the first encoder width.
    pub fn decoder_widths(&self) -> Vec<usize> {
        let n = self.encoder_blocks;
        (0..n)
            .map(|j| self.channel_widths[(n as isize - 2 - j as isize).max(0) as usize])
            .collect()
    }
}
