use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::path::Path;

use crate::container::Container;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::signal_prep::TimeSeries;

pub const RIDGE_MAGIC: &[u8; 5] = b"NSRR1";

/// Lags `0, 25, …, 200` samples: 0–2 s at 100 Hz.
pub fn default_lag_taps() -> Vec<usize> {
    (0..=8).map(|i| 25 * i).collect()
}

/// `10^-3 … 10^3`, one point per decade.
pub fn default_lambda_grid() -> Vec<f64> {
    (-3..=3).map(|e| 10f64.powi(e)).collect()
}

/// Lagged-sample design matrix, row-major `[n_obs × C·|taps|]`.
///
/// Row `i` describes time `t = first_row + i` and holds, lag-major,
/// `eeg[c, t − lag]` for every tap and channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Features {
    pub data: Vec<f64>,
    pub n_obs: usize,
    pub dim: usize,
    pub first_row: usize,
}

impl Features {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

pub fn ridge_features(eeg: &TimeSeries, lag_taps: &[usize]) -> Result<Features> {
    if lag_taps.is_empty() {
        return Err(Error::config("ridge needs at least one lag tap"));
    }
    let max_lag = *lag_taps.iter().max().unwrap_or(&0);
    let n = eeg.n_samples();
    if max_lag >= n {
        return Err(Error::dim(format!(
            "lag of {max_lag} samples exceeds a {n}-sample segment"
        )));
    }
    let c = eeg.n_channels();
    let dim = c * lag_taps.len();
    let n_obs = n - max_lag;
    let mut data = Vec::with_capacity(n_obs * dim);
    for t in max_lag..n {
        for &lag in lag_taps {
            data.extend(eeg.channels().map(|ch| ch[t - lag]));
        }
    }
    Ok(Features {
        data,
        n_obs,
        dim,
        first_row: max_lag,
    })
}

/// Sums over a block of rows from which centered normal equations and
/// held-out errors of any sub-union of blocks follow.
#[derive(Clone, Debug)]
struct Moments {
    n: f64,
    sx: DVector<f64>,
    sy: DVector<f64>,
    xx: DMatrix<f64>,
    xy: DMatrix<f64>,
    yy: DVector<f64>,
}

impl Moments {
    fn of(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Self {
        let n = x.nrows() as f64;
        Self {
            n,
            sx: x.row_sum().transpose(),
            sy: y.row_sum().transpose(),
            xx: x.tr_mul(x),
            xy: x.tr_mul(y),
            yy: y.component_mul(y).row_sum().transpose(),
        }
    }

    fn minus(&self, other: &Moments) -> Moments {
        Moments {
            n: self.n - other.n,
            sx: &self.sx - &other.sx,
            sy: &self.sy - &other.sy,
            xx: &self.xx - &other.xx,
            xy: &self.xy - &other.xy,
            yy: &self.yy - &other.yy,
        }
    }

    /// Centered Gram matrix and cross products.
    fn centered(&self) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>, DVector<f64>) {
        let mx = &self.sx / self.n;
        let my = &self.sy / self.n;
        let g = &self.xx - (&mx * mx.transpose()) * self.n;
        let c = &self.xy - (&mx * my.transpose()) * self.n;
        (g, c, mx, my)
    }

    /// Sum of squared errors of `x·w + b` on these rows, per target.
    fn sse(&self, w: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
        let gw = &self.xx * w;
        DVector::from_iterator(
            w.ncols(),
            (0..w.ncols()).map(|r| {
                let wr = w.column(r);
                self.yy[r] - 2.0 * wr.dot(&self.xy.column(r)) - 2.0 * b[r] * self.sy[r]
                    + wr.dot(&gw.column(r))
                    + 2.0 * b[r] * wr.dot(&self.sx)
                    + self.n * b[r] * b[r]
            }),
        )
    }
}

/// Largest condition number accepted from the factorization.
const MAX_CONDITION: f64 = 1e14;

fn solve(g: &DMatrix<f64>, c: &DMatrix<f64>, lambda: f64) -> Result<(DMatrix<f64>, f64)> {
    let d = g.nrows();
    let a = g + DMatrix::identity(d, d) * lambda;
    let chol = a.clone().cholesky();
    let cond_estimate = |a: &DMatrix<f64>| {
        let eig = a.clone().symmetric_eigenvalues();
        let max = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let min = eig.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        max / min
    };
    let Some(chol) = chol else {
        return Err(Error::numeric(format!(
            "ridge system is singular at lambda = {lambda} (condition estimate {:.3e})",
            cond_estimate(&a)
        )));
    };
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if (hi / lo).powi(2) > MAX_CONDITION {
        let cond = cond_estimate(&a);
        if cond > MAX_CONDITION {
            return Err(Error::numeric(format!(
                "ridge system is singular at lambda = {lambda} (condition estimate {cond:.3e})"
            )));
        }
    }
    let mut w = chol.solve(c);
    // one step of iterative refinement
    let r = c - &a * &w;
    w += chol.solve(&r);
    let resid = (&a * &w - c).amax();
    Ok((w, resid))
}

/// Fitted linear map from lagged EEG to ROI signals.
#[derive(Clone, Debug, PartialEq)]
pub struct RidgeModel {
    /// `[n_rois × feature_dim]`.
    pub weights: Vec<f64>,
    pub intercepts: Vec<f64>,
    pub lambda: f64,
    pub lag_taps: Vec<usize>,
    pub channels: Vec<String>,
    pub rois: Vec<String>,
    /// Normal-equation residual `‖(XᵀX + λI)W − XᵀY‖∞ / ‖XᵀY‖∞` of the fit.
    pub relative_residual: f64,
}

impl RidgeModel {
    pub fn feature_dim(&self) -> usize {
        self.channels.len() * self.lag_taps.len()
    }

    pub fn weight(&self, roi: usize, feature: usize) -> f64 {
        self.weights[roi * self.feature_dim() + feature]
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }
}

fn to_matrix(data: &[f64], rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

fn fit_from_moments(m: &Moments, lambda: f64) -> Result<(DMatrix<f64>, DVector<f64>, f64)> {
    let (g, c, mx, my) = m.centered();
    let (w, resid) = solve(&g, &c, lambda)?;
    let b = my - w.transpose() * mx;
    let scale = c.amax();
    let rel = if scale > 0.0 { resid / scale } else { resid };
    Ok((w, b, rel))
}

/// Solves the centered ridge normal equations `(XᵀX + λI)W = XᵀY` for the
/// row-major design `x` `[n × d]` and targets `y` `[n × R]`; intercepts are
/// recovered from the means and not penalized.
///
/// Returns `(W [R × d] row-major, intercepts, relative residual)`.
pub fn ridge_fit(x: &[f64], y: &[f64], n: usize, d: usize, r: usize, lambda: f64) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    if n == 0 || x.len() != n * d || y.len() != n * r {
        return Err(Error::dim(format!(
            "ridge_fit: X has {} values for [{n}×{d}], Y has {} for [{n}×{r}]",
            x.len(),
            y.len()
        )));
    }
    if !(lambda >= 0.0) {
        return Err(Error::config(format!("lambda must be ≥ 0, got {lambda}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::data("ridge_fit: non-finite input"));
    }
    let m = Moments::of(&to_matrix(x, n, d), &to_matrix(y, n, r));
    let (w, b, rel) = fit_from_moments(&m, lambda)?;
    Ok((w.as_slice().to_vec(), b.as_slice().to_vec(), rel))
}

/// Targets aligned with `features`: `y[:, first_row..]`, row-major `[n × R]`.
fn target_rows(fmri: &TimeSeries, first_row: usize) -> Vec<f64> {
    let n = fmri.n_samples();
    let mut out = Vec::with_capacity((n - first_row) * fmri.n_channels());
    for t in first_row..n {
        out.extend(fmri.channels().map(|c| c[t]));
    }
    out
}

/// Result of the blocked cross-validation over the λ grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaSearch {
    pub lambdas: Vec<f64>,
    /// Mean held-out squared error per λ.
    pub cv_mse: Vec<f64>,
    pub best: f64,
}

/// Fits the baseline on aligned training series, choosing λ by `folds`-fold
/// cross-validation over contiguous blocks.
pub fn fit_ridge_baseline(
    eeg: &TimeSeries,
    fmri: &TimeSeries,
    lag_taps: &[usize],
    lambdas: &[f64],
    folds: usize,
) -> Result<(RidgeModel, LambdaSearch)> {
    if eeg.n_samples() != fmri.n_samples() {
        return Err(Error::dim(format!(
            "ridge: EEG has {} samples, fMRI {}",
            eeg.n_samples(),
            fmri.n_samples()
        )));
    }
    if lambdas.is_empty() || folds < 2 {
        return Err(Error::config("ridge CV needs a nonempty grid and ≥ 2 folds"));
    }
    let feats = ridge_features(eeg, lag_taps)?;
    let (n, d, r) = (feats.n_obs, feats.dim, fmri.n_channels());
    if n < folds {
        return Err(Error::data(format!("{n} ridge observations cannot form {folds} folds")));
    }
    let ys = target_rows(fmri, feats.first_row);
    let bounds: Vec<usize> = (0..=folds).map(|f| f * n / folds).collect();
    let blocks: Vec<Moments> = (0..folds)
        .map(|f| {
            let (a, b) = (bounds[f], bounds[f + 1]);
            Moments::of(
                &to_matrix(&feats.data[a * d..b * d], b - a, d),
                &to_matrix(&ys[a * r..b * r], b - a, r),
            )
        })
        .collect();
    let total = blocks[1..].iter().fold(blocks[0].clone(), |acc, m| Moments {
        n: acc.n + m.n,
        sx: acc.sx + &m.sx,
        sy: acc.sy + &m.sy,
        xx: acc.xx + &m.xx,
        xy: acc.xy + &m.xy,
        yy: acc.yy + &m.yy,
    });
    let mut cv_mse = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let mut sse = 0.0;
        for block in &blocks {
            let (w, b, _) = fit_from_moments(&total.minus(block), lambda)?;
            sse += block.sse(&w, &b).sum();
        }
        cv_mse.push(sse / (n * r) as f64);
    }
    let best_i = (0..lambdas.len())
        .min_by(|&a, &b| cv_mse[a].total_cmp(&cv_mse[b]))
        .unwrap_or(0);
    let best = lambdas[best_i];
    let (w, b, rel) = fit_from_moments(&total, best)?;
    let model = RidgeModel {
        weights: w.as_slice().to_vec(),
        intercepts: b.as_slice().to_vec(),
        lambda: best,
        lag_taps: lag_taps.to_vec(),
        channels: eeg.labels().to_vec(),
        rois: fmri.labels().to_vec(),
        relative_residual: rel,
    };
    Ok((
        model,
        LambdaSearch {
            lambdas: lambdas.to_vec(),
            cv_mse,
            best,
        },
    ))
}

/// Predictions `XW + b` for every time with a full lag history. Returns the
/// series and the EEG index of its first sample.
pub fn ridge_predict(model: &RidgeModel, eeg: &TimeSeries) -> Result<(TimeSeries, usize)> {
    if eeg.labels() != model.channels.as_slice() {
        return Err(Error::dim(format!(
            "ridge model expects channels {:?}, got {:?}",
            model.channels,
            eeg.labels()
        )));
    }
    let feats = ridge_features(eeg, &model.lag_taps)?;
    let d = feats.dim;
    let r = model.rois.len();
    let mut out = vec![0.0; r * feats.n_obs];
    for roi in 0..r {
        let w = &model.weights[roi * d..(roi + 1) * d];
        for i in 0..feats.n_obs {
            let dot: f64 = feats.row(i).iter().zip(w).map(|(a, b)| a * b).sum();
            out[roi * feats.n_obs + i] = dot + model.intercepts[roi];
        }
    }
    Ok((TimeSeries::new(out, eeg.fs(), model.rois.clone())?, feats.first_row))
}

pub fn save_ridge(path: &Path, model: &RidgeModel, extra: serde_json::Value) -> Result<()> {
    let mut c = Container::new(json!({
        "kind": "ridge",
        "lambda": model.lambda,
        "lag_taps": model.lag_taps,
        "channels": model.channels,
        "rois": model.rois,
        "relative_residual": model.relative_residual,
        "extra": extra,
    }));
    c.push("weights", &Tensor::new(vec![model.rois.len(), model.feature_dim()], model.weights.clone())?);
    c.push("intercepts", &Tensor::new(vec![model.rois.len()], model.intercepts.clone())?);
    c.write(path, RIDGE_MAGIC)
}

pub fn load_ridge(path: &Path) -> Result<RidgeModel> {
    let c = Container::read(path, RIDGE_MAGIC)?;
    let field = |k: &str| {
        c.meta
            .get(k)
            .cloned()
            .ok_or_else(|| Error::data(format!("{}: ridge manifest lacks {k}", path.display())))
    };
    let model = RidgeModel {
        weights: c.get::<f64>("weights")?.into_data(),
        intercepts: c.get::<f64>("intercepts")?.into_data(),
        lambda: serde_json::from_value(field("lambda")?)?,
        lag_taps: serde_json::from_value(field("lag_taps")?)?,
        channels: serde_json::from_value(field("channels")?)?,
        rois: serde_json::from_value(field("rois")?)?,
        relative_residual: serde_json::from_value(field("relative_residual")?)?,
    };
    if model.weights.len() != model.rois.len() * model.feature_dim() || model.intercepts.len() != model.rois.len() {
        return Err(Error::data(format!("{}: ridge tensors disagree with manifest", path.display())));
    }
    Ok(model)
}
