//! Mini-batch training of the model with the composite objective.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{sample_windows, Dataset, WindowPair};
use crate::diffcore::{Mode, Rng, Tape};
use crate::error::{Error, Result};
use crate::model::{model_forward_on_tape, ModelConfig, ModelParams};
use crate::objective::{adamw_step, composite_loss, OptimizerConfig, OptimizerState};
use crate::signal_prep::{zscore_apply, zscore_fit, ZScoreStats};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Windows drawn (with replacement) per epoch.
    pub windows_per_epoch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            windows_per_epoch: 100,
        }
    }
}

/// Mean loss terms over the windows of a step or an epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub mse: f64,
    pub corr: f64,
    pub composite: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mse: f64,
    pub corr: f64,
    pub composite: f64,
}

/// Parameters plus optimizer state, advanced one mini-batch at a time.
pub struct Trainer {
    pub params: ModelParams<f32>,
    pub state: OptimizerState<f32>,
    pub optim: OptimizerConfig,
    names: Vec<String>,
    dropout_rng: Rng,
}

struct WindowResult {
    grads: Vec<Vec<f32>>,
    mse: f64,
    corr: f64,
    total: f64,
}

impl Trainer {
    pub fn new(params: ModelParams<f32>, optim: OptimizerConfig, dropout_rng: Rng) -> Result<Self> {
        optim.validate()?;
        let names = params.layout().into_iter().map(|s| s.name).collect();
        let state = OptimizerState::new(params.tensors());
        Ok(Self {
            params,
            state,
            optim,
            names,
            dropout_rng,
        })
    }

    fn window(&self, w: &WindowPair, mut rng: Rng) -> Result<WindowResult> {
        let mut tape = Tape::new();
        let vars = self.params.register(&mut tape);
        let x = tape.constant(w.x.clone());
        let pred = model_forward_on_tape(&mut tape, &vars, self.params.config(), x, Mode::Train, &mut rng)?;
        let terms = composite_loss(&mut tape, pred, &w.y, self.optim.alpha_corr)?;
        let value = |v| tape.value(v).item() as f64;
        let (mse, corr, total) = (value(terms.mse), value(terms.corr), value(terms.total));
        if !total.is_finite() {
            return Err(Error::numeric(format!("non-finite loss on window starting at {}", w.start)));
        }
        tape.backward(terms.total)?;
        let grads = vars
            .all()
            .iter()
            .map(|&v| tape.take_grad(v).unwrap_or_default())
            .collect();
        Ok(WindowResult { grads, mse, corr, total })
    }

    /// One optimizer update on the mean gradient of `batch`.
    ///
    /// Windows may run on several threads; per-window gradients are summed
    /// in batch order, so the update does not depend on the thread count.
    pub fn step(&mut self, batch: &[WindowPair]) -> Result<LossStats> {
        if batch.is_empty() {
            return Err(Error::config("empty batch"));
        }
        let rngs: Vec<Rng> = batch.iter().map(|_| self.dropout_rng.split()).collect();
        let this = &*self;
        let results: Vec<WindowResult> = batch
            .par_iter()
            .zip(rngs)
            .map(|(w, rng)| this.window(w, rng))
            .collect::<Result<_>>()?;
        let mut sum = results[0].grads.clone();
        for r in &results[1..] {
            for (acc, g) in sum.iter_mut().zip(&r.grads) {
                for (a, b) in acc.iter_mut().zip(g) {
                    *a += b;
                }
            }
        }
        let inv = 1.0 / batch.len() as f32;
        for g in sum.iter_mut().flatten() {
            *g *= inv;
        }
        adamw_step(self.params.tensors_mut(), &sum, &mut self.state, &self.optim, &self.names)?;
        let n = results.len() as f64;
        Ok(LossStats {
            mse: results.iter().map(|r| r.mse).sum::<f64>() / n,
            corr: results.iter().map(|r| r.corr).sum::<f64>() / n,
            composite: results.iter().map(|r| r.total).sum::<f64>() / n,
        })
    }
}

/// Result of a training run. When `failure` is set, `params` holds the
/// parameters before the last successful update, the most recent ones whose
/// loss and gradient were both finite.
#[derive(Debug)]
pub struct TrainOutcome {
    pub params: ModelParams<f32>,
    pub best: ModelParams<f32>,
    pub best_epoch: usize,
    pub history: Vec<EpochStats>,
    pub failure: Option<Error>,
}

/// Independent generator streams derived from one seed.
pub struct Streams {
    pub init: Rng,
    pub windows: Rng,
    pub dropout: Rng,
}

impl Streams {
    pub fn from_seed(seed: u64) -> Self {
        let mut root = Rng::new(seed);
        Self {
            init: root.split(),
            windows: root.split(),
            dropout: root.split(),
        }
    }
}

/// Trains a freshly initialized model on an aligned, normalized training
/// segment. Each epoch draws `windows_per_epoch` windows and updates once per
/// `batch_size` of them; the last batch of an epoch may be smaller.
pub fn train(
    train_set: &Dataset,
    model: &ModelConfig,
    optim: &OptimizerConfig,
    cfg: &TrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    model.validate()?;
    optim.validate()?;
    train_set.check_aligned()?;
    if train_set.eeg.n_channels() != model.n_eeg_channels || train_set.fmri.n_channels() != model.n_rois {
        return Err(Error::config(format!(
            "model expects {} EEG channels and {} ROIs, data has {} and {}",
            model.n_eeg_channels,
            model.n_rois,
            train_set.eeg.n_channels(),
            train_set.fmri.n_channels()
        )));
    }
    if cfg.windows_per_epoch == 0 {
        return Err(Error::config("train.windows_per_epoch must be ≥ 1"));
    }
    let mut streams = Streams::from_seed(seed);
    let params = ModelParams::init(model, &mut streams.init)?;
    let mut trainer = Trainer::new(params, optim.clone(), streams.dropout)?;
    let mut best = trainer.params.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut last_good = trainer.params.clone();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let windows = sample_windows(train_set, cfg.windows_per_epoch, model.window_len_samples, &mut streams.windows)?;
        let mut acc = LossStats::default();
        for batch in windows.chunks(optim.batch_size) {
            let before = trainer.params.clone();
            let stats = match trainer.step(batch) {
                Ok(s) => {
                    last_good = before;
                    s
                }
                Err(e @ Error::Numeric(_)) => {
                    return Ok(TrainOutcome {
                        params: last_good,
                        best,
                        best_epoch,
                        history,
                        failure: Some(Error::Numeric(format!("epoch {epoch}: {e}"))),
                    })
                }
                Err(e) => return Err(e),
            };
            let w = batch.len() as f64;
            acc.mse += stats.mse * w;
            acc.corr += stats.corr * w;
            acc.composite += stats.composite * w;
        }
        let n = windows.len() as f64;
        let stats = EpochStats {
            epoch,
            mse: acc.mse / n,
            corr: acc.corr / n,
            composite: acc.composite / n,
        };
        if stats.composite < best_loss {
            best_loss = stats.composite;
            best_epoch = epoch;
            best = trainer.params.clone();
        }
        on_epoch(&stats);
        history.push(stats);
    }
    Ok(TrainOutcome {
        params: trainer.params,
        best,
        best_epoch,
        history,
        failure: None,
    })
}

/// Normalization statistics fitted on the training segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub eeg: ZScoreStats,
    pub fmri: ZScoreStats,
}

impl Normalization {
    pub fn fit(train: &Dataset) -> Self {
        Self {
            eeg: zscore_fit(&train.eeg),
            fmri: zscore_fit(&train.fmri),
        }
    }

    pub fn apply(&self, d: &Dataset) -> Result<Dataset> {
        Ok(Dataset {
            eeg: zscore_apply(&d.eeg, &self.eeg)?,
            fmri: zscore_apply(&d.fmri, &self.fmri)?,
            subject_id: d.subject_id.clone(),
            provenance: d.provenance,
        })
    }
}
