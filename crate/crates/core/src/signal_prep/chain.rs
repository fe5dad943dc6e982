use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    apply_filter, design_butterworth, hrf_shift_align, rereference_average, resample_with,
    FilterSpec, ResampleOptions, TimeSeries,
};
use crate::error::{Error, Result};

/// Parameters of the full conditioning chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepConfig {
    pub bandpass_low_hz: f64,
    pub bandpass_high_hz: f64,
    pub bandpass_order: usize,
    pub notch_hz: Vec<f64>,
    pub notch_q: f64,
    pub rereference: bool,
    pub target_fs: f64,
    /// Lowpass before decimation; off reproduces plain decimation of the
    /// bandpassed signal.
    pub anti_alias: bool,
    pub zero_phase: bool,
    pub hrf_delay_s: f64,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self {
            bandpass_low_hz: 1.0,
            bandpass_high_hz: 100.0,
            bandpass_order: 4,
            notch_hz: vec![50.0, 100.0, 150.0],
            notch_q: 30.0,
            rereference: true,
            target_fs: 100.0,
            anti_alias: true,
            zero_phase: true,
            hrf_delay_s: 6.0,
        }
    }
}

/// One applied step, recorded for the prep manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrepStep {
    pub name: String,
    pub params: serde_json::Value,
}

#[derive(Clone, Debug)]
pub struct PrepOutput {
    pub eeg: TimeSeries,
    pub fmri: TimeSeries,
    pub steps: Vec<PrepStep>,
}

fn step<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{name}: {m}")),
        Error::Dimension(m) => Error::Dimension(format!("{name}: {m}")),
        Error::Data(m) => Error::Data(format!("{name}: {m}")),
        Error::Numeric(m) => Error::Numeric(format!("{name}: {m}")),
        other => other,
    })
}

/// Runs bandpass, notches, average re-reference and resampling on the EEG,
/// interpolates the ROI series to the same rate, then applies the
/// hemodynamic shift.
pub fn prepare(eeg: &TimeSeries, fmri: &TimeSeries, cfg: &PrepConfig) -> Result<PrepOutput> {
    let mut steps = Vec::new();
    let fs = eeg.fs();

    let spec = FilterSpec::Bandpass {
        low_hz: cfg.bandpass_low_hz,
        high_hz: cfg.bandpass_high_hz,
        order: cfg.bandpass_order,
    };
    let sos = step("bandpass", design_butterworth(&spec, fs))?;
    let mut x = step("bandpass", apply_filter(eeg, &sos, cfg.zero_phase))?;
    steps.push(PrepStep {
        name: "bandpass".into(),
        params: json!({"spec": spec, "fs_hz": fs, "zero_phase": cfg.zero_phase}),
    });

    for &f in &cfg.notch_hz {
        let spec = FilterSpec::Notch { freq_hz: f, q: cfg.notch_q };
        let sos = step("notch", design_butterworth(&spec, fs))?;
        x = step("notch", apply_filter(&x, &sos, cfg.zero_phase))?;
        steps.push(PrepStep {
            name: "notch".into(),
            params: json!({"spec": spec, "fs_hz": fs, "zero_phase": cfg.zero_phase}),
        });
    }

    if cfg.rereference {
        x = step("rereference", rereference_average(&x))?;
        steps.push(PrepStep {
            name: "rereference".into(),
            params: json!({"method": "average"}),
        });
    }

    let opts = ResampleOptions { anti_alias: cfg.anti_alias };
    x = step("resample_eeg", resample_with(&x, cfg.target_fs, opts))?;
    steps.push(PrepStep {
        name: "resample_eeg".into(),
        params: json!({"from_hz": fs, "to_hz": cfg.target_fs, "anti_alias": cfg.anti_alias}),
    });

    let mut y = step("resample_fmri", resample_with(fmri, cfg.target_fs, opts))?;
    steps.push(PrepStep {
        name: "resample_fmri".into(),
        params: json!({"from_hz": fmri.fs(), "to_hz": cfg.target_fs, "method": "cubic_spline"}),
    });

    let n = x.n_samples().min(y.n_samples());
    if x.n_samples() != y.n_samples() {
        steps.push(PrepStep {
            name: "truncate".into(),
            params: json!({"eeg_samples": x.n_samples(), "fmri_samples": y.n_samples(), "kept": n}),
        });
        x = x.slice(0, n)?;
        y = y.slice(0, n)?;
    }

    let (x, y) = step("hrf_shift", hrf_shift_align(&x, &y, cfg.hrf_delay_s))?;
    steps.push(PrepStep {
        name: "hrf_shift".into(),
        params: json!({"delay_s": cfg.hrf_delay_s, "n_samples": x.n_samples()}),
    });
    Ok(PrepOutput { eeg: x, fmri: y, steps })
}
