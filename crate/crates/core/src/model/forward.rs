use super::{ModelConfig, ModelParams, ParamVars};
use crate::diffcore::{Mode, Rng, Scalar, Tape, Tensor, Var, LAYER_NORM_EPS};
use crate::error::{Error, Result};

/// Sine-layer MLP applied independently at every time index.
///
/// `x` is `[n_eeg_channels × L]`; the result is `[F × L]`. The first
/// `K + 1` layers are `sin(ω₀·(W·x + b))`, the last is a plain affine
/// projection.
pub fn siren_forward<S: Scalar>(
    tape: &mut Tape<S>,
    vars: &ParamVars,
    config: &ModelConfig,
    x: Var,
) -> Result<Var> {
    let shape = tape.value(x).shape();
    if shape.len() != 2 || shape[0] != config.n_eeg_channels {
        return Err(Error::dim(format!(
            "siren: expected [{} × L] input, got {shape:?}",
            config.n_eeg_channels
        )));
    }
    let layers = vars.siren();
    let (sines, proj) = layers.split_at(layers.len() - 2);
    let mut h = x;
    for pair in sines.chunks(2) {
        let z = tape.affine(h, pair[0], pair[1])?;
        h = tape.sine(z, config.omega0)?;
    }
    tape.affine(h, proj[0], proj[1])
}

/// `conv → layer norm → GELU → max-pool(2) → dropout`, once per block.
pub fn encoder_forward<S: Scalar>(
    tape: &mut Tape<S>,
    vars: &ParamVars,
    config: &ModelConfig,
    features: Var,
    mode: Mode,
    rng: &mut Rng,
) -> Result<Var> {
    let len = tape.value(features).shape().get(1).copied().unwrap_or(0);
    let factor = 1usize << config.encoder_blocks;
    if len == 0 || len % factor != 0 {
        return Err(Error::dim(format!(
            "encoder: length {len} is not divisible by 2^{}",
            config.encoder_blocks
        )));
    }
    let mut h = features;
    for block in vars.encoder().chunks(4) {
        h = tape.conv1d(h, block[0], block[1])?;
        h = tape.layer_norm(h, block[2], block[3], LAYER_NORM_EPS)?;
        h = tape.gelu(h);
        h = tape.maxpool1d(h)?;
        h = tape.dropout(h, config.dropout_rate, mode, rng)?;
    }
    Ok(h)
}

/// `upsample(2) → conv → layer norm → GELU → dropout` per block, then the
/// 1×1 convolution head producing one channel per ROI.
pub fn decoder_forward<S: Scalar>(
    tape: &mut Tape<S>,
    vars: &ParamVars,
    config: &ModelConfig,
    latent: Var,
    mode: Mode,
    rng: &mut Rng,
) -> Result<Var> {
    let shape = tape.value(latent).shape().to_vec();
    let want_c = config.channel_widths[config.encoder_blocks - 1];
    if shape.len() != 2 || shape[0] != want_c {
        return Err(Error::dim(format!(
            "decoder: expected [{want_c} × L] latent, got {shape:?}"
        )));
    }
    let mut h = latent;
    for block in vars.decoder().chunks(4) {
        h = tape.upsample_nn(h, 2)?;
        h = tape.conv1d(h, block[0], block[1])?;
        h = tape.layer_norm(h, block[2], block[3], LAYER_NORM_EPS)?;
        h = tape.gelu(h);
        h = tape.dropout(h, config.dropout_rate, mode, rng)?;
    }
    let (w, b) = vars.head();
    tape.conv1d(h, w, b)
}

/// SIREN → encoder → decoder on a recorded tape.
pub fn model_forward_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    vars: &ParamVars,
    config: &ModelConfig,
    x: Var,
    mode: Mode,
    rng: &mut Rng,
) -> Result<Var> {
    let features = siren_forward(tape, vars, config, x)?;
    let latent = encoder_forward(tape, vars, config, features, mode, rng)?;
    decoder_forward(tape, vars, config, latent, mode, rng)
}

/// Untracked forward pass: `[n_eeg_channels × L] → [n_rois × L]`.
pub fn model_forward<S: Scalar>(
    params: &ModelParams<S>,
    x: &Tensor<S>,
    mode: Mode,
    rng: &mut Rng,
) -> Result<Tensor<S>> {
    let mut tape = Tape::new();
    let vars = params.register_frozen(&mut tape);
    let xv = tape.constant(x.clone());
    let out = model_forward_on_tape(&mut tape, &vars, params.config(), xv, mode, rng)?;
    Ok(tape.into_tensor(out))
}
