use super::filter::{design_butterworth, filter_signal, FilterSpec};
use super::TimeSeries;
use crate::error::{Error, Result};

/// Largest denominator accepted when expressing `target/source` as a ratio.
pub const MAX_DENOMINATOR: u64 = 1000;
const RATIO_TOL: f64 = 1e-9;
const ANTI_ALIAS_ORDER: usize = 8;
const ANTI_ALIAS_FRACTION: f64 = 0.45;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResampleOptions {
    /// Lowpass at `0.45·target` before decimating. Turning it off decimates
    /// the signal as is.
    pub anti_alias: bool,
}

impl Default for ResampleOptions {
    fn default() -> Self {
        Self { anti_alias: true }
    }
}

/// `(p, q)` with `p/q ≈ ratio` and `q ≤ MAX_DENOMINATOR`.
pub fn rational_ratio(ratio: f64) -> Result<(u64, u64)> {
    for q in 1..=MAX_DENOMINATOR {
        let p = (ratio * q as f64).round();
        if p >= 1.0 && ((p / q as f64) - ratio).abs() <= RATIO_TOL * ratio {
            return Ok((p as u64, q));
        }
    }
    Err(Error::config(format!(
        "rate ratio {ratio} has no rational approximation with denominator ≤ {MAX_DENOMINATOR}"
    )))
}

/// Natural cubic spline through `(i·h, y[i])`.
#[derive(Clone, Debug)]
pub struct CubicSpline {
    y: Vec<f64>,
    m: Vec<f64>,
    h: f64,
}

impl CubicSpline {
    pub fn new(y: &[f64], h: f64) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(Error::dim("spline needs at least 2 knots"));
        }
        // second derivatives from the tridiagonal system (Thomas algorithm)
        let mut m = vec![0.0; n];
        if n > 2 {
            let k = n - 2;
            let mut c = vec![0.0; k];
            let mut d = vec![0.0; k];
            for i in 0..k {
                let rhs = 6.0 * (y[i + 2] - 2.0 * y[i + 1] + y[i]) / (h * h);
                let denom = if i == 0 { 4.0 } else { 4.0 - c[i - 1] };
                c[i] = 1.0 / denom;
                d[i] = if i == 0 { rhs / denom } else { (rhs - d[i - 1]) / denom };
            }
            for i in (0..k).rev() {
                m[i + 1] = if i + 1 == k { d[i] } else { d[i] - c[i] * m[i + 2] };
            }
        }
        Ok(Self { y: y.to_vec(), m, h })
    }

    /// Value at `t`; beyond the end knots the spline continues linearly.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.y.len();
        let h = self.h;
        let last = (n - 1) as f64 * h;
        if t <= 0.0 {
            return self.y[0] + t * self.slope(0, 0.0);
        }
        if t >= last {
            return self.y[n - 1] + (t - last) * self.slope(n - 2, h);
        }
        let i = ((t / h) as usize).min(n - 2);
        let a = (i as f64 + 1.0) * h - t;
        let b = t - i as f64 * h;
        (self.m[i] * a * a * a + self.m[i + 1] * b * b * b) / (6.0 * h)
            + (self.y[i] / h - self.m[i] * h / 6.0) * a
            + (self.y[i + 1] / h - self.m[i + 1] * h / 6.0) * b
    }

    /// Derivative within interval `i` at offset `b` from its left knot.
    fn slope(&self, i: usize, b: f64) -> f64 {
        let h = self.h;
        let a = h - b;
        (-self.m[i] * a * a + self.m[i + 1] * b * b) / (2.0 * h) + (self.y[i + 1] - self.y[i]) / h
            - (self.m[i + 1] - self.m[i]) * h / 6.0
    }
}

/// Output length for a signal of `n` samples moved from `source` to
/// `target` Hz.
pub fn resampled_len(n: usize, source: f64, target: f64) -> usize {
    (n as f64 * target / source).round() as usize
}

fn resample_channel(x: &[f64], source: f64, target: f64, opts: ResampleOptions) -> Result<Vec<f64>> {
    let n_out = resampled_len(x.len(), source, target);
    let (p, q) = rational_ratio(target / source)?;
    if p == q {
        return Ok(x.to_vec());
    }
    if p > q {
        let spline = CubicSpline::new(x, 1.0 / source)?;
        return Ok((0..n_out).map(|j| spline.eval(j as f64 / target)).collect());
    }
    let filtered = if opts.anti_alias {
        let sos = design_butterworth(
            &FilterSpec::Lowpass {
                cutoff_hz: ANTI_ALIAS_FRACTION * target,
                order: ANTI_ALIAS_ORDER,
            },
            source,
        )?;
        filter_signal(x, &sos, true)?
    } else {
        x.to_vec()
    };
    if p == 1 {
        let step = q as usize;
        return Ok((0..n_out).map(|j| filtered[j * step]).collect());
    }
    let spline = CubicSpline::new(&filtered, 1.0 / source)?;
    Ok((0..n_out).map(|j| spline.eval(j as f64 / target)).collect())
}

/// Moves every channel to `target_fs`: anti-aliased decimation when going
/// down, natural cubic spline interpolation when going up. Output length is
/// `round(L·target/source)`.
pub fn resample(x: &TimeSeries, target_fs: f64) -> Result<TimeSeries> {
    resample_with(x, target_fs, ResampleOptions::default())
}

pub fn resample_with(x: &TimeSeries, target_fs: f64, opts: ResampleOptions) -> Result<TimeSeries> {
    if !(target_fs > 0.0) || !target_fs.is_finite() {
        return Err(Error::config(format!("target rate must be positive, got {target_fs}")));
    }
    if target_fs == x.fs() {
        return Ok(x.clone());
    }
    let source = x.fs();
    x.map_channels(target_fs, |c| resample_channel(c, source, target_fs, opts))
}
