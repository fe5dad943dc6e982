use serde::{Deserialize, Serialize};

use super::{Dataset, Provenance};
use crate::diffcore::Rng;
use crate::error::{Error, Result};
use crate::signal_prep::{CubicSpline, TimeSeries};

/// Rate at which ground-truth envelopes are reported.
pub const ENVELOPE_FS: f64 = 10.0;
const HRF_TAP_HZ: f64 = 10.0;

/// How ROI signals derive from the simulated sources.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthTarget {
    /// Each ROI is one oscillator's amplitude envelope convolved with the HRF.
    Hrf,
    /// Each ROI is a fixed linear mix of the EEG channels, delayed.
    Linear,
}

/// Double-gamma hemodynamic response: a gamma peak minus a scaled, later
/// gamma undershoot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HrfParams {
    pub peak_shape: f64,
    pub undershoot_shape: f64,
    pub scale: f64,
    pub undershoot_ratio: f64,
    /// Kernel support in seconds.
    pub length_s: f64,
}

impl Default for HrfParams {
    fn default() -> Self {
        Self {
            peak_shape: 6.0,
            undershoot_shape: 16.0,
            scale: 1.0,
            undershoot_ratio: 1.0 / 6.0,
            length_s: 32.0,
        }
    }
}

fn gamma_pdf(t: f64, shape: f64, scale: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let log = (shape - 1.0) * t.ln() - t / scale - shape * scale.ln() - libm::lgamma(shape);
    log.exp()
}

impl HrfParams {
    pub fn eval(&self, t: f64) -> f64 {
        gamma_pdf(t, self.peak_shape, self.scale)
            - self.undershoot_ratio * gamma_pdf(t, self.undershoot_shape, self.scale)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_channels: usize,
    pub n_rois: usize,
    pub duration_s: f64,
    pub eeg_fs: f64,
    pub fmri_fs: f64,
    /// Carrier frequency of the oscillator driving each ROI.
    pub bands_hz: Vec<f64>,
    /// Spacing of the random knots of the log-envelope.
    pub envelope_knot_s: f64,
    /// Standard deviation of the log-envelope.
    pub envelope_sigma: f64,
    /// Standard deviation of the pink noise added to each EEG channel.
    pub eeg_noise_sd: f64,
    /// Standard deviation of the white noise added to each unit-variance ROI.
    pub fmri_noise_sd: f64,
    pub hrf: HrfParams,
    pub target: SynthTarget,
    /// Delay of the linear target relative to the EEG.
    pub linear_lag_s: f64,
    pub subject_id: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_channels: 30,
            n_rois: 4,
            duration_s: 300.0,
            eeg_fs: 1000.0,
            fmri_fs: 0.5,
            bands_hz: vec![6.0, 10.0, 15.0, 22.0],
            envelope_knot_s: 6.0,
            envelope_sigma: 1.0,
            eeg_noise_sd: 0.5,
            fmri_noise_sd: 0.2,
            hrf: HrfParams::default(),
            target: SynthTarget::Hrf,
            linear_lag_s: 0.5,
            subject_id: "synthetic".into(),
        }
    }
}

/// Minimum recording length at 100 Hz: two 2048-sample windows.
const MIN_SAMPLES_AT_100HZ: f64 = 2.0 * 2048.0;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_channels < 2 || self.n_rois == 0 {
            return Err(Error::config("synth needs ≥ 2 EEG channels and ≥ 1 ROI"));
        }
        if self.duration_s * 100.0 < MIN_SAMPLES_AT_100HZ {
            return Err(Error::config(format!(
                "synth.duration_s = {} is shorter than two windows ({} s)",
                self.duration_s,
                MIN_SAMPLES_AT_100HZ / 100.0
            )));
        }
        if !(self.eeg_fs > 0.0 && self.fmri_fs > 0.0) {
            return Err(Error::config("synth rates must be positive"));
        }
        if self.bands_hz.len() != self.n_rois {
            return Err(Error::config(format!(
                "synth.bands_hz lists {} bands for {} ROIs",
                self.bands_hz.len(),
                self.n_rois
            )));
        }
        if let Some(f) = self.bands_hz.iter().find(|&&f| !(f > 0.0 && f < self.eeg_fs / 2.0)) {
            return Err(Error::config(format!("band {f} Hz is outside (0, {}) Hz", self.eeg_fs / 2.0)));
        }
        let sds = [self.envelope_sigma, self.eeg_noise_sd, self.fmri_noise_sd];
        if sds.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::config("synth noise levels and envelope sigma must be ≥ 0"));
        }
        if !(self.envelope_knot_s > 0.0) || !(self.hrf.length_s > 0.0) || !(self.hrf.scale > 0.0) {
            return Err(Error::config("synth knot spacing and HRF length/scale must be positive"));
        }
        if self.target == SynthTarget::Linear && self.fmri_fs != self.eeg_fs {
            return Err(Error::config("the linear target needs fmri_fs == eeg_fs"));
        }
        if !(self.linear_lag_s >= 0.0) {
            return Err(Error::config("synth.linear_lag_s must be ≥ 0"));
        }
        Ok(())
    }

    fn roi_names(&self) -> Vec<String> {
        const NAMES: [&str; 4] = ["pallidum", "caudate", "putamen", "accumbens"];
        if self.n_rois == NAMES.len() {
            NAMES.iter().map(|s| s.to_string()).collect()
        } else {
            (0..self.n_rois).map(|i| format!("roi{i:02}")).collect()
        }
    }
}

/// Generated data plus the noise-free quantities behind it.
#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub dataset: Dataset,
    /// Amplitude envelope of each oscillator at [`ENVELOPE_FS`].
    pub envelopes: TimeSeries,
    /// ROI series before noise, on the fMRI grid.
    pub clean_rois: TimeSeries,
}

/// Amplitude envelope `exp(σ·g(t))` with `g` a spline through standard
/// normal knots, defined from `-pre_roll` onwards.
struct Envelope {
    spline: CubicSpline,
    sigma: f64,
    origin: f64,
}

impl Envelope {
    fn new(rng: &mut Rng, cfg: &SynthConfig, pre_roll: f64) -> Result<Self> {
        let span = pre_roll + cfg.duration_s + 2.0 * cfg.envelope_knot_s;
        let n = (span / cfg.envelope_knot_s).ceil() as usize + 1;
        let knots: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        Ok(Self {
            spline: CubicSpline::new(&knots, cfg.envelope_knot_s)?,
            sigma: cfg.envelope_sigma,
            origin: -pre_roll,
        })
    }

    fn at(&self, t: f64) -> f64 {
        (self.sigma * self.spline.eval(t - self.origin)).exp()
    }
}

/// Pink noise via a fixed bank of first-order filters on white noise, scaled
/// to unit standard deviation.
fn pink_noise(rng: &mut Rng, n: usize) -> Vec<f64> {
    let mut b = [0.0f64; 7];
    let mut out: Vec<f64> = (0..n)
        .map(|_| {
            let w = rng.normal();
            b[0] = 0.99886 * b[0] + w * 0.055_517_9;
            b[1] = 0.99332 * b[1] + w * 0.075_075_9;
            b[2] = 0.96900 * b[2] + w * 0.153_852;
            b[3] = 0.86650 * b[3] + w * 0.310_485_6;
            b[4] = 0.55000 * b[4] + w * 0.532_952_2;
            b[5] = -0.7616 * b[5] - w * 0.016_898;
            let p = b[..6].iter().sum::<f64>() + b[6] + w * 0.5362;
            b[6] = w * 0.115_926;
            p
        })
        .collect();
    standardize(&mut out);
    out
}

fn standardize(x: &mut [f64]) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    for v in x {
        *v = (*v - m) / sd;
    }
}

fn quantize(x: &mut [f64]) {
    for v in x {
        *v = *v as f32 as f64;
    }
}

/// Simulates a paired EEG/ROI recording.
///
/// Every component draws from its own child stream of `rng`, so changing one
/// noise level leaves all other components bit-identical.
pub fn synth_generate(cfg: &SynthConfig, rng: &mut Rng) -> Result<SynthOutput> {
    cfg.validate()?;
    let mut env_rng = rng.split();
    let mut mix_rng = rng.split();
    let mut phase_rng = rng.split();
    let mut eeg_noise_rng = rng.split();
    let mut fmri_noise_rng = rng.split();

    let c = cfg.n_channels;
    let k = cfg.n_rois;
    let pre_roll = cfg.hrf.length_s;
    let envelopes = (0..k)
        .map(|_| Envelope::new(&mut env_rng, cfg, pre_roll))
        .collect::<Result<Vec<_>>>()?;
    let mixing: Vec<f64> = (0..c * k).map(|_| mix_rng.normal()).collect();
    let phases: Vec<f64> = (0..k).map(|_| phase_rng.uniform() * std::f64::consts::TAU).collect();

    let n_eeg = (cfg.duration_s * cfg.eeg_fs).round() as usize;
    let lead = match cfg.target {
        SynthTarget::Linear => (cfg.linear_lag_s * cfg.eeg_fs).round() as usize,
        SynthTarget::Hrf => 0,
    };
    let total = n_eeg + lead;
    // sources sampled from `−lead` so a delayed linear target is defined at t = 0
    let sources: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let w = std::f64::consts::TAU * cfg.bands_hz[j];
            (0..total)
                .map(|i| {
                    let t = (i as f64 - lead as f64) / cfg.eeg_fs;
                    envelopes[j].at(t) * (w * t + phases[j]).sin()
                })
                .collect()
        })
        .collect();
    let mut eeg_full = vec![0.0; c * total];
    for ch in 0..c {
        let row = &mut eeg_full[ch * total..(ch + 1) * total];
        for j in 0..k {
            let a = mixing[ch * k + j];
            for (v, s) in row.iter_mut().zip(&sources[j]) {
                *v += a * s;
            }
        }
        if cfg.eeg_noise_sd > 0.0 {
            let noise = pink_noise(&mut eeg_noise_rng, total);
            for (v, e) in row.iter_mut().zip(noise) {
                *v += cfg.eeg_noise_sd * e;
            }
        }
    }
    quantize(&mut eeg_full);

    let n_fmri = (cfg.duration_s * cfg.fmri_fs).round() as usize;
    let mut clean = vec![0.0; k * n_fmri];
    match cfg.target {
        SynthTarget::Hrf => {
            let taps: Vec<f64> = (0..(cfg.hrf.length_s * HRF_TAP_HZ).round() as usize)
                .map(|i| cfg.hrf.eval(i as f64 / HRF_TAP_HZ) / HRF_TAP_HZ)
                .collect();
            for j in 0..k {
                for i in 0..n_fmri {
                    let t = i as f64 / cfg.fmri_fs;
                    clean[j * n_fmri + i] = taps
                        .iter()
                        .enumerate()
                        .map(|(m, h)| h * envelopes[j].at(t - m as f64 / HRF_TAP_HZ))
                        .sum();
                }
            }
        }
        SynthTarget::Linear => {
            let weights: Vec<f64> = (0..k * c).map(|_| mix_rng.normal()).collect();
            for j in 0..k {
                for ch in 0..c {
                    let w = weights[j * c + ch];
                    let src = &eeg_full[ch * total..ch * total + n_eeg];
                    for (v, e) in clean[j * n_fmri..(j + 1) * n_fmri].iter_mut().zip(src) {
                        *v += w * e;
                    }
                }
            }
        }
    }
    for row in clean.chunks_exact_mut(n_fmri) {
        standardize(row);
    }
    let mut fmri = clean.clone();
    if cfg.fmri_noise_sd > 0.0 {
        for v in &mut fmri {
            *v += cfg.fmri_noise_sd * fmri_noise_rng.normal();
        }
    }
    quantize(&mut fmri);

    let eeg: Vec<f64> = eeg_full
        .chunks_exact(total)
        .flat_map(|row| row[lead..].iter().copied())
        .collect();
    let eeg_labels: Vec<String> = (0..c).map(|i| format!("eeg{i:02}")).collect();
    let rois = cfg.roi_names();
    let n_env = (cfg.duration_s * ENVELOPE_FS).round() as usize;
    let env_data = envelopes
        .iter()
        .flat_map(|e| (0..n_env).map(move |i| e.at(i as f64 / ENVELOPE_FS)))
        .collect();
    let band_labels = cfg.bands_hz.iter().map(|f| format!("{f}Hz")).collect();
    Ok(SynthOutput {
        dataset: Dataset {
            eeg: TimeSeries::new(eeg, cfg.eeg_fs, eeg_labels)?,
            fmri: TimeSeries::new(fmri, cfg.fmri_fs, rois.clone())?,
            subject_id: cfg.subject_id.clone(),
            provenance: Provenance::Synthetic,
        },
        envelopes: TimeSeries::new(env_data, ENVELOPE_FS, band_labels)?,
        clean_rois: TimeSeries::new(clean, cfg.fmri_fs, rois)?,
    })
}
