use super::ModelConfig;
use crate::diffcore::{Rng, Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Name and shape of one learnable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

fn spec(name: String, shape: Vec<usize>) -> ParamSpec {
    ParamSpec { name, shape }
}

/// Canonical order of every learnable tensor for `config`.
///
/// SIREN sine layers and projection first, then four tensors per encoder
/// block (conv weight, conv bias, norm gain, norm shift), the same per
/// decoder block, and finally the 1×1 output head.
pub fn param_layout(config: &ModelConfig) -> Vec<ParamSpec> {
    let f = config.siren_hidden_width;
    let k = config.kernel_size;
    let mut out = Vec::new();
    for i in 0..=config.siren_hidden_layers {
        let fan_in = if i == 0 { config.n_eeg_channels } else { f };
        out.push(spec(format!("siren.sine{i}.weight"), vec![f, fan_in]));
        out.push(spec(format!("siren.sine{i}.bias"), vec![f]));
    }
    out.push(spec("siren.proj.weight".into(), vec![f, f]));
    out.push(spec("siren.proj.bias".into(), vec![f]));
    let push_block = |out: &mut Vec<ParamSpec>, prefix: String, c_in: usize, c_out: usize| {
        out.push(spec(format!("{prefix}.conv.weight"), vec![c_out, c_in, k]));
        out.push(spec(format!("{prefix}.conv.bias"), vec![c_out]));
        out.push(spec(format!("{prefix}.norm.gain"), vec![c_out]));
        out.push(spec(format!("{prefix}.norm.shift"), vec![c_out]));
    };
    let mut c_in = f;
    for (j, &w) in config.channel_widths.iter().enumerate() {
        push_block(&mut out, format!("encoder.{j}"), c_in, w);
        c_in = w;
    }
    for (j, w) in config.decoder_widths().into_iter().enumerate() {
        push_block(&mut out, format!("decoder.{j}"), c_in, w);
        c_in = w;
    }
    out.push(spec("head.weight".into(), vec![config.n_rois, c_in, 1]));
    out.push(spec("head.bias".into(), vec![config.n_rois]));
    out
}

fn uniform<S: Scalar>(shape: &[usize], bound: f64, rng: &mut Rng) -> Tensor<S> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| S::from_f64(rng.uniform_range(-bound, bound))).collect();
    Tensor::new(shape.to_vec(), data).expect("layout shapes are consistent")
}

/// SIREN weights: the input layer draws from `U(−1/fan_in, 1/fan_in)`, deeper
/// sine layers and the projection from `U(−√(6/fan_in)/ω₀, √(6/fan_in)/ω₀)`.
/// Biases start at zero.
pub fn siren_init<S: Scalar>(config: &ModelConfig, rng: &mut Rng) -> Vec<Tensor<S>> {
    let layout = param_layout(config);
    let n_siren = 2 * (config.siren_hidden_layers + 2);
    let mut out = Vec::with_capacity(n_siren);
    for (i, pair) in layout[..n_siren].chunks(2).enumerate() {
        let (w, b) = (&pair[0], &pair[1]);
        let fan_in = w.shape[1] as f64;
        let bound = if i == 0 {
            1.0 / fan_in
        } else {
            (6.0 / fan_in).sqrt() / config.omega0
        };
        out.push(uniform(&w.shape, bound, rng));
        out.push(Tensor::zeros(&b.shape));
    }
    out
}

/// All learnable tensors of the model, in [`param_layout`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<S> {
    config: ModelConfig,
    tensors: Vec<Tensor<S>>,
}

impl<S: Scalar> ModelParams<S> {
    /// Fresh parameters. Conv kernels draw from `U(±1/√fan_in)` with
    /// `fan_in = c_in·k`; conv biases and norm shifts start at 0, norm gains
    /// at 1.
    pub fn init(config: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let layout = param_layout(config);
        let mut tensors = siren_init(config, rng);
        for p in &layout[tensors.len()..] {
            let t = if p.name.ends_with(".weight") {
                let fan_in = (p.shape[1] * p.shape[2]) as f64;
                uniform(&p.shape, 1.0 / fan_in.sqrt(), rng)
            } else if p.name.ends_with(".gain") {
                Tensor::full(&p.shape, S::ONE)
            } else {
                Tensor::zeros(&p.shape)
            };
            tensors.push(t);
        }
        Ok(Self {
            config: config.clone(),
            tensors,
        })
    }

    /// Assemble from tensors in layout order, checking every shape.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<Tensor<S>>) -> Result<Self> {
        config.validate()?;
        let layout = param_layout(config);
        if layout.len() != tensors.len() {
            return Err(Error::dim(format!(
                "expected {} parameter tensors, got {}",
                layout.len(),
                tensors.len()
            )));
        }
        for (p, t) in layout.iter().zip(&tensors) {
            if p.shape != t.shape() {
                return Err(Error::dim(format!(
                    "{}: expected shape {:?}, got {:?}",
                    p.name,
                    p.shape,
                    t.shape()
                )));
            }
        }
        Ok(Self {
            config: config.clone(),
            tensors,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[Tensor<S>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<S>] {
        &mut self.tensors
    }

    pub fn layout(&self) -> Vec<ParamSpec> {
        param_layout(&self.config)
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Record every tensor on `tape` as a trainable leaf.
    pub fn register(&self, tape: &mut Tape<S>) -> ParamVars {
        self.register_with(tape, true)
    }

    /// Record every tensor as a constant (inference).
    pub fn register_frozen(&self, tape: &mut Tape<S>) -> ParamVars {
        self.register_with(tape, false)
    }

    fn register_with(&self, tape: &mut Tape<S>, trainable: bool) -> ParamVars {
        let vars = self
            .tensors
            .iter()
            .map(|t| {
                if trainable {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect();
        ParamVars::new(&self.config, vars)
    }

    pub fn cast<T: Scalar>(&self) -> ModelParams<T> {
        ModelParams {
            config: self.config.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }
}

/// Tape handles for a registered [`ModelParams`], split by component.
#[derive(Clone, Debug)]
pub struct ParamVars {
    all: Vec<Var>,
    n_siren: usize,
    n_blocks: usize,
}

impl ParamVars {
    pub fn new(config: &ModelConfig, all: Vec<Var>) -> Self {
        Self {
            all,
            n_siren: 2 * (config.siren_hidden_layers + 2),
            n_blocks: config.encoder_blocks,
        }
    }

    pub fn all(&self) -> &[Var] {
        &self.all
    }

    /// `(weight, bias)` pairs: sine layers, then the projection.
    pub fn siren(&self) -> &[Var] {
        &self.all[..self.n_siren]
    }

    pub fn encoder(&self) -> &[Var] {
        &self.all[self.n_siren..self.n_siren + 4 * self.n_blocks]
    }

    pub fn decoder(&self) -> &[Var] {
        let start = self.n_siren + 4 * self.n_blocks;
        &self.all[start..start + 4 * self.n_blocks]
    }

    pub fn head(&self) -> (Var, Var) {
        let n = self.all.len();
        (self.all[n - 2], self.all[n - 1])
    }
}
