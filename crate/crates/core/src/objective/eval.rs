use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::pearson_r;
use crate::data::{tile_starts, Dataset};
use crate::diffcore::{Mode, Rng, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::model::{model_forward, ModelParams};
use crate::signal_prep::TimeSeries;

/// Correlation of one ROI over the test segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoiScore {
    pub name: String,
    pub r: f64,
    pub degenerate: bool,
}

/// Held-out per-ROI correlations with their mean and population standard
/// deviation across ROIs.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub rois: Vec<RoiScore>,
    pub mean: f64,
    pub sd: f64,
    pub n_test_samples: usize,
    pub config_hash: String,
    /// Same metric for a reference model, when one was evaluated.
    pub baseline: Option<Vec<RoiScore>>,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

impl EvalReport {
    /// Scores `pred` against `truth` channel by channel.
    pub fn from_series(truth: &TimeSeries, pred: &TimeSeries) -> Result<Self> {
        let rois = score(truth, pred)?;
        let rs: Vec<f64> = rois.iter().map(|s| s.r).collect();
        let (mean, sd) = mean_sd(&rs);
        Ok(Self {
            rois,
            mean,
            sd,
            n_test_samples: truth.n_samples(),
            config_hash: String::new(),
            baseline: None,
        })
    }

    pub fn baseline_mean(&self) -> Option<f64> {
        self.baseline
            .as_ref()
            .map(|b| b.iter().map(|s| s.r).sum::<f64>() / b.len() as f64)
    }

    /// Whether the mean correlation falls below the baseline's.
    pub fn below_baseline(&self) -> Option<bool> {
        self.baseline_mean().map(|b| self.mean < b)
    }

    pub fn to_json(&self) -> Value {
        let rois: Map<String, Value> = self.rois.iter().map(|s| (s.name.clone(), json!(s.r))).collect();
        let degenerate: Vec<&str> = self.rois.iter().filter(|s| s.degenerate).map(|s| s.name.as_str()).collect();
        let mut out = json!({
            "rois": rois,
            "mean": self.mean,
            "sd": self.sd,
            "n_test_samples": self.n_test_samples,
            "config_hash": self.config_hash,
            "degenerate": degenerate,
        });
        if let Some(b) = &self.baseline {
            let rois: Map<String, Value> = b.iter().map(|s| (s.name.clone(), json!(s.r))).collect();
            out["baseline"] = json!({"kind": "ridge", "rois": rois, "mean": self.baseline_mean()});
            out["below_baseline"] = json!(self.below_baseline());
        }
        out
    }
}

/// Pearson correlation per channel.
pub fn score(truth: &TimeSeries, pred: &TimeSeries) -> Result<Vec<RoiScore>> {
    if truth.n_channels() != pred.n_channels() || truth.n_samples() != pred.n_samples() {
        return Err(Error::dim(format!(
            "prediction [{} × {}] does not match truth [{} × {}]",
            pred.n_channels(),
            pred.n_samples(),
            truth.n_channels(),
            truth.n_samples()
        )));
    }
    truth
        .channels()
        .zip(pred.channels())
        .zip(truth.labels())
        .map(|((y, p), name)| {
            let r = pearson_r(y, p)?;
            if r.degenerate {
                log::warn!("correlation for {name} is undefined (constant series)");
            }
            Ok(RoiScore {
                name: name.clone(),
                r: r.r,
                degenerate: r.degenerate,
            })
        })
        .collect()
}

/// Eval-mode prediction over a whole segment: non-overlapping windows plus
/// one end-aligned window covering any remainder.
pub fn predict_segment<S: Scalar>(params: &ModelParams<S>, eeg: &TimeSeries, roi_names: &[String]) -> Result<TimeSeries> {
    let cfg = params.config();
    let w = cfg.window_len_samples;
    let n = eeg.n_samples();
    let starts = tile_starts(n, w, true);
    if starts.is_empty() {
        return Err(Error::data(format!(
            "test segment of {n} samples is shorter than one {w}-sample window"
        )));
    }
    if roi_names.len() != cfg.n_rois {
        return Err(Error::dim(format!(
            "{} ROI names for a {}-ROI model",
            roi_names.len(),
            cfg.n_rois
        )));
    }
    let r = cfg.n_rois;
    let mut out = vec![0.0; r * n];
    let mut covered = 0;
    // eval mode draws nothing from the generator
    let mut rng = Rng::new(0);
    for start in starts {
        let data = eeg
            .channels()
            .flat_map(|c| c[start..start + w].iter().map(|&v| S::from_f64(v)))
            .collect();
        let x = Tensor::new(vec![eeg.n_channels(), w], data)?;
        let y = model_forward(params, &x, Mode::Eval, &mut rng)?;
        for roi in 0..r {
            let row = y.row(roi);
            for t in covered.max(start)..start + w {
                out[roi * n + t] = row[t - start].to_f64();
            }
        }
        covered = start + w;
    }
    TimeSeries::new(out, eeg.fs(), roi_names.to_vec())
}

/// Per-ROI correlation of eval-mode predictions over the test segment.
pub fn evaluate<S: Scalar>(params: &ModelParams<S>, test: &Dataset) -> Result<(EvalReport, TimeSeries)> {
    test.check_aligned()?;
    if test.n_samples() == 0 {
        return Err(Error::data("empty test set"));
    }
    let pred = predict_segment(params, &test.eeg, test.fmri.labels())?;
    Ok((EvalReport::from_series(&test.fmri, &pred)?, pred))
}
