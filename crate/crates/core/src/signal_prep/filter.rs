use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::TimeSeries;
use crate::error::{Error, Result};

/// What to design. Corners are in Hz.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FilterSpec {
    /// Butterworth bandpass built from an `order`-pole lowpass prototype,
    /// giving `order` second-order sections.
    Bandpass { low_hz: f64, high_hz: f64, order: usize },
    Lowpass { cutoff_hz: f64, order: usize },
    /// Second-order notch whose −3 dB stop band is `freq_hz / q` wide.
    Notch { freq_hz: f64, q: f64 },
}

/// One biquad `[b0, b1, b2, a0, a1, a2]` with `a0 == 1`.
pub type Section = [f64; 6];

/// Cascade of second-order sections.
#[derive(Clone, Debug, PartialEq)]
pub struct Sos {
    pub sections: Vec<Section>,
}

impl Sos {
    /// Complex frequency response at `f_hz`.
    pub fn response(&self, f_hz: f64, fs: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -2.0 * PI * f_hz / fs);
        let z2 = z1 * z1;
        self.sections.iter().fold(Complex64::new(1.0, 0.0), |acc, s| {
            acc * (s[0] + s[1] * z1 + s[2] * z2) / (s[3] + s[4] * z1 + s[5] * z2)
        })
    }

    pub fn gain_db(&self, f_hz: f64, fs: f64) -> f64 {
        20.0 * self.response(f_hz, fs).norm().log10()
    }

    /// Magnitudes of all poles.
    pub fn pole_radii(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for s in &self.sections {
            let (a1, a2) = (s[4] / s[3], s[5] / s[3]);
            if a2 == 0.0 {
                out.push(a1.abs());
                continue;
            }
            let disc = Complex64::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
            out.push(((-a1 + disc) / 2.0).norm());
            out.push(((-a1 - disc) / 2.0).norm());
        }
        out
    }

    /// Edge padding used by zero-phase filtering.
    pub fn pad_len(&self) -> usize {
        3 * (2 * self.sections.len() + 1)
    }
}

fn check_corner(f: f64, fs: f64, what: &str) -> Result<()> {
    if !(f > 0.0 && f < fs / 2.0) {
        return Err(Error::config(format!(
            "{what} {f} Hz must lie strictly inside (0, {}) Hz for fs = {fs}",
            fs / 2.0
        )));
    }
    Ok(())
}

fn prewarp(f: f64, fs: f64) -> f64 {
    2.0 * fs * (PI * f / fs).tan()
}

fn bilinear(s: Complex64, fs: f64) -> Complex64 {
    let k = 2.0 * fs;
    (k + s) / (k - s)
}

/// Normalized Butterworth prototype poles in the left half plane.
fn prototype_poles(order: usize) -> Vec<Complex64> {
    (0..order)
        .map(|k| {
            let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect()
}

/// Pairs digital poles into sections with the given numerator; each complex
/// pole in the upper half plane is matched with its conjugate.
fn sections_from_poles(poles: &[Complex64], num2: [f64; 3], num1: [f64; 3]) -> Vec<Section> {
    let mut out = Vec::new();
    for p in poles {
        if p.im > 1e-12 {
            out.push([num2[0], num2[1], num2[2], 1.0, -2.0 * p.re, p.norm_sqr()]);
        } else if p.im.abs() <= 1e-12 {
            out.push([num1[0], num1[1], num1[2], 1.0, -p.re, 0.0]);
        }
    }
    out
}

fn normalize(mut sos: Sos, f_ref: f64, fs: f64) -> Sos {
    let g = sos.response(f_ref, fs).norm();
    for v in &mut sos.sections[0][..3] {
        *v /= g;
    }
    sos
}

/// Designs the section cascade for `spec` at sampling rate `fs`.
///
/// Butterworth designs use the bilinear transform with prewarped corners;
/// the notch is the standard biquad band-stop.
pub fn design_butterworth(spec: &FilterSpec, fs: f64) -> Result<Sos> {
    if !(fs > 0.0) {
        return Err(Error::config(format!("sampling rate must be positive, got {fs}")));
    }
    match *spec {
        FilterSpec::Lowpass { cutoff_hz, order } => {
            check_corner(cutoff_hz, fs, "lowpass cutoff")?;
            if order == 0 {
                return Err(Error::config("filter order must be ≥ 1"));
            }
            let wc = prewarp(cutoff_hz, fs);
            let poles: Vec<_> = prototype_poles(order)
                .into_iter()
                .map(|p| bilinear(p * wc, fs))
                .collect();
            let sections = sections_from_poles(&poles, [1.0, 2.0, 1.0], [1.0, 1.0, 0.0]);
            Ok(normalize(Sos { sections }, 0.0, fs))
        }
        FilterSpec::Bandpass {
            low_hz,
            high_hz,
            order,
        } => {
            check_corner(low_hz, fs, "bandpass low corner")?;
            check_corner(high_hz, fs, "bandpass high corner")?;
            if low_hz >= high_hz {
                return Err(Error::config(format!(
                    "bandpass corners out of order: {low_hz} ≥ {high_hz}"
                )));
            }
            if order == 0 {
                return Err(Error::config("filter order must be ≥ 1"));
            }
            let (wl, wh) = (prewarp(low_hz, fs), prewarp(high_hz, fs));
            let bw = wh - wl;
            let w0_sq = wl * wh;
            let mut poles = Vec::with_capacity(2 * order);
            for p in prototype_poles(order) {
                let pb = p * bw;
                let disc = (pb * pb - 4.0 * w0_sq).sqrt();
                poles.push(bilinear((pb + disc) / 2.0, fs));
                poles.push(bilinear((pb - disc) / 2.0, fs));
            }
            let sections = sections_from_poles(&poles, [1.0, 0.0, -1.0], [1.0, 0.0, -1.0]);
            // unit gain at the digital image of the analog center frequency
            let f0 = fs / PI * (w0_sq.sqrt() / (2.0 * fs)).atan();
            Ok(normalize(Sos { sections }, f0, fs))
        }
        FilterSpec::Notch { freq_hz, q } => {
            check_corner(freq_hz, fs, "notch frequency")?;
            if !(q > 0.0) {
                return Err(Error::config(format!("notch Q must be positive, got {q}")));
            }
            // −3 dB bandwidth of exactly freq_hz / q
            let w0 = 2.0 * PI * freq_hz / fs;
            let beta = (w0 / (2.0 * q)).tan();
            let g = 1.0 / (1.0 + beta);
            let c = w0.cos();
            Ok(Sos {
                sections: vec![[g, -2.0 * g * c, g, 1.0, -2.0 * g * c, 2.0 * g - 1.0]],
            })
        }
    }
}

/// Steady-state state vectors for a unit-step input, per section.
fn sos_zi(sos: &Sos) -> Vec<[f64; 2]> {
    let mut scale = 1.0;
    sos.sections
        .iter()
        .map(|s| {
            let [b0, b1, b2, _, a1, a2] = *s;
            let g = (b0 + b1 + b2) / (1.0 + a1 + a2);
            let z2 = b2 - a2 * g;
            let z1 = b1 - a1 * g + z2;
            let zi = [scale * z1, scale * z2];
            scale *= g;
            zi
        })
        .collect()
}

/// Causal cascade filtering, transposed direct form II, starting from `zi`
/// scaled by `x0`.
fn sos_filter(sos: &Sos, x: &mut [f64], zi: Option<(&[[f64; 2]], f64)>) {
    for (i, s) in sos.sections.iter().enumerate() {
        let [b0, b1, b2, _, a1, a2] = *s;
        let (mut z1, mut z2) = match zi {
            Some((zi, x0)) => (zi[i][0] * x0, zi[i][1] * x0),
            None => (0.0, 0.0),
        };
        for v in x.iter_mut() {
            let xin = *v;
            let y = b0 * xin + z1;
            z1 = b1 * xin - a1 * y + z2;
            z2 = b2 * xin - a2 * y;
            *v = y;
        }
    }
}

/// Filters one channel. Zero-phase mode runs the cascade forward then
/// backward over an odd-reflection-padded copy, with steady-state initial
/// conditions at both passes.
pub fn filter_signal(x: &[f64], sos: &Sos, zero_phase: bool) -> Result<Vec<f64>> {
    if !zero_phase {
        let mut y = x.to_vec();
        sos_filter(sos, &mut y, None);
        return Ok(y);
    }
    let pad = sos.pad_len();
    if x.len() <= pad {
        return Err(Error::dim(format!(
            "series of {} samples is too short for zero-phase padding of {pad}",
            x.len()
        )));
    }
    let n = x.len();
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
    let zi = sos_zi(sos);
    let x0 = ext[0];
    sos_filter(sos, &mut ext, Some((&zi, x0)));
    ext.reverse();
    let y0 = ext[0];
    sos_filter(sos, &mut ext, Some((&zi, y0)));
    ext.reverse();
    Ok(ext[pad..pad + n].to_vec())
}

/// Filters every channel of `x` with `sos`.
pub fn apply_filter(x: &TimeSeries, sos: &Sos, zero_phase: bool) -> Result<TimeSeries> {
    x.map_channels(x.fs(), |c| filter_signal(c, sos, zero_phase))
}
