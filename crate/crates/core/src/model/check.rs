use super::{model_forward_on_tape, ModelConfig, ModelParams, ParamVars};
use crate::diffcore::{grad_check_with, GradCheckReport, Mode, OpKind, Rng, Tensor};
use crate::error::Result;
use crate::objective::composite_loss;

/// A two-block model small enough for finite differences over every weight.
pub fn gradcheck_config() -> ModelConfig {
    ModelConfig {
        n_eeg_channels: 30,
        n_rois: 2,
        siren_hidden_width: 6,
        siren_hidden_layers: 1,
        encoder_blocks: 2,
        channel_widths: vec![5, 7],
        kernel_size: 3,
        dropout_rate: 0.0,
        window_len_samples: 64,
        ..Default::default()
    }
}

/// Checks the composite-loss gradient of the whole network with respect to
/// every parameter, on a random input and target drawn from `seed`.
pub fn model_grad_check(
    config: &ModelConfig,
    seed: u64,
    alpha: f64,
    eps: f64,
    corrupt: Option<OpKind>,
) -> Result<GradCheckReport> {
    let mut rng = Rng::new(seed);
    let params = ModelParams::<f64>::init(config, &mut rng)?;
    let len = config.window_len_samples;
    let mut draw = |rows: usize| {
        Tensor::new(vec![rows, len], (0..rows * len).map(|_| rng.normal()).collect())
    };
    let x = draw(config.n_eeg_channels)?;
    let y = draw(config.n_rois)?;
    grad_check_with(
        |tape, vars| {
            let pv = ParamVars::new(config, vars.to_vec());
            let xv = tape.constant(x.clone());
            let out = model_forward_on_tape(tape, &pv, config, xv, Mode::Eval, &mut Rng::new(0))?;
            Ok(composite_loss(tape, out, &y, alpha)?.total)
        },
        params.tensors(),
        eps,
        corrupt,
    )
}
