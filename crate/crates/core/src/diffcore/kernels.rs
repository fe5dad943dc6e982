//! Slice-level forward and backward kernels.
//!
//! Layout conventions: signals are `[channels × length]` row-major, conv
//! kernels are `[c_out × c_in × k]`. Backward kernels accumulate into their
//! gradient outputs.

use super::Scalar;

pub(crate) fn affine_forward<S: Scalar>(
    w: &[S],
    x: &[S],
    b: &[S],
    n: usize,
    m: usize,
    l: usize,
) -> Vec<S> {
    let mut out = Vec::with_capacity(n * l);
    for &bias in b {
        out.extend(std::iter::repeat(bias).take(l));
    }
    S::gemm(n, m, l, w, false, x, false, S::ONE, &mut out);
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn affine_backward<S: Scalar>(
    g: &[S],
    w: &[S],
    x: &[S],
    n: usize,
    m: usize,
    l: usize,
    dw: Option<&mut [S]>,
    dx: Option<&mut [S]>,
    db: Option<&mut [S]>,
) {
    if let Some(dw) = dw {
        S::gemm(n, l, m, g, false, x, true, S::ONE, dw);
    }
    if let Some(dx) = dx {
        S::gemm(m, n, l, w, true, g, false, S::ONE, dx);
    }
    if let Some(db) = db {
        row_sums_into(g, l, db);
    }
}

fn row_sums_into<S: Scalar>(g: &[S], cols: usize, out: &mut [S]) {
    for (o, row) in out.iter_mut().zip(g.chunks_exact(cols)) {
        let mut s = S::ZERO;
        for &v in row {
            s += v;
        }
        *o += s;
    }
}

/// Unfold `x [c_in × l]` into `[(c_in·k) × l]` with symmetric zero padding.
pub(crate) fn im2col<S: Scalar>(x: &[S], c_in: usize, l: usize, k: usize) -> Vec<S> {
    let pad = (k / 2) as isize;
    let mut cols = vec![S::ZERO; c_in * k * l];
    for ci in 0..c_in {
        let src = &x[ci * l..(ci + 1) * l];
        for j in 0..k {
            let off = j as isize - pad;
            let dst = &mut cols[(ci * k + j) * l..(ci * k + j + 1) * l];
            let (t0, t1) = valid_range(off, l);
            if t0 < t1 {
                let s0 = (t0 as isize + off) as usize;
                dst[t0..t1].copy_from_slice(&src[s0..s0 + (t1 - t0)]);
            }
        }
    }
    cols
}

fn valid_range(off: isize, l: usize) -> (usize, usize) {
    let t0 = (-off).max(0) as usize;
    let t1 = (l as isize - off).min(l as isize).max(0) as usize;
    (t0.min(l), t1)
}

fn col2im_into<S: Scalar>(dcols: &[S], c_in: usize, l: usize, k: usize, dx: &mut [S]) {
    let pad = (k / 2) as isize;
    for ci in 0..c_in {
        let dst = &mut dx[ci * l..(ci + 1) * l];
        for j in 0..k {
            let off = j as isize - pad;
            let src = &dcols[(ci * k + j) * l..(ci * k + j + 1) * l];
            let (t0, t1) = valid_range(off, l);
            if t0 < t1 {
                let d0 = (t0 as isize + off) as usize;
                for (d, &s) in dst[d0..d0 + (t1 - t0)].iter_mut().zip(&src[t0..t1]) {
                    *d += s;
                }
            }
        }
    }
}

/// Returns the output and the unfolded input (empty when `k == 1`, in which
/// case the input itself is the unfolded matrix).
pub(crate) fn conv1d_forward<S: Scalar>(
    x: &[S],
    kernels: &[S],
    bias: &[S],
    c_in: usize,
    c_out: usize,
    l: usize,
    k: usize,
) -> (Vec<S>, Vec<S>) {
    let mut out = Vec::with_capacity(c_out * l);
    for &b in bias {
        out.extend(std::iter::repeat(b).take(l));
    }
    if k == 1 {
        S::gemm(c_out, c_in, l, kernels, false, x, false, S::ONE, &mut out);
        (out, Vec::new())
    } else {
        let cols = im2col(x, c_in, l, k);
        S::gemm(c_out, c_in * k, l, kernels, false, &cols, false, S::ONE, &mut out);
        (out, cols)
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv1d_backward<S: Scalar>(
    g: &[S],
    cols: &[S],
    kernels: &[S],
    c_in: usize,
    c_out: usize,
    l: usize,
    k: usize,
    dk: Option<&mut [S]>,
    db: Option<&mut [S]>,
    dx: Option<&mut [S]>,
) {
    let ck = c_in * k;
    if let Some(dk) = dk {
        S::gemm(c_out, l, ck, g, false, cols, true, S::ONE, dk);
    }
    if let Some(db) = db {
        row_sums_into(g, l, db);
    }
    if let Some(dx) = dx {
        if k == 1 {
            S::gemm(c_in, c_out, l, kernels, true, g, false, S::ONE, dx);
        } else {
            let mut dcols = vec![S::ZERO; ck * l];
            S::gemm(ck, c_out, l, kernels, true, g, false, S::ZERO, &mut dcols);
            col2im_into(&dcols, c_in, l, k, dx);
        }
    }
}

/// Window 2, stride 2; ties resolve to the earlier index.
pub(crate) fn maxpool2_forward<S: Scalar>(x: &[S], c: usize, l: usize) -> (Vec<S>, Vec<u32>) {
    let half = l / 2;
    let mut out = Vec::with_capacity(c * half);
    let mut arg = Vec::with_capacity(c * half);
    for ch in 0..c {
        let row = &x[ch * l..(ch + 1) * l];
        for t in 0..half {
            let (a, b) = (row[2 * t], row[2 * t + 1]);
            let idx = if b > a { 2 * t + 1 } else { 2 * t };
            out.push(row[idx]);
            arg.push((ch * l + idx) as u32);
        }
    }
    (out, arg)
}

pub(crate) fn maxpool2_backward<S: Scalar>(g: &[S], arg: &[u32], dx: &mut [S]) {
    for (&gi, &a) in g.iter().zip(arg) {
        dx[a as usize] += gi;
    }
}

pub(crate) fn upsample_forward<S: Scalar>(x: &[S], factor: usize) -> Vec<S> {
    let mut out = Vec::with_capacity(x.len() * factor);
    for &v in x {
        out.extend(std::iter::repeat(v).take(factor));
    }
    out
}

pub(crate) fn upsample_backward<S: Scalar>(g: &[S], factor: usize, dx: &mut [S]) {
    for (d, grp) in dx.iter_mut().zip(g.chunks_exact(factor)) {
        let mut s = S::ZERO;
        for &v in grp {
            s += v;
        }
        *d += s;
    }
}

pub(crate) struct LayerNormCache<S> {
    pub xhat: Vec<S>,
    pub inv_std: Vec<S>,
}

/// Normalizes across channels at every time index.
pub(crate) fn layer_norm_forward<S: Scalar>(
    x: &[S],
    gain: &[S],
    shift: &[S],
    c: usize,
    l: usize,
    eps: S,
) -> (Vec<S>, LayerNormCache<S>) {
    let inv_c = S::ONE / S::from_f64(c as f64);
    let mut mean = vec![S::ZERO; l];
    for row in x.chunks_exact(l) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m *= inv_c;
    }
    let mut var = vec![S::ZERO; l];
    for row in x.chunks_exact(l) {
        for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
            let d = v - m;
            *s += d * d;
        }
    }
    let inv_std: Vec<S> = var
        .iter()
        .map(|&s| S::ONE / (s * inv_c + eps).sqrt())
        .collect();
    let mut xhat = Vec::with_capacity(c * l);
    let mut out = Vec::with_capacity(c * l);
    for (ch, row) in x.chunks_exact(l).enumerate() {
        let (ga, sh) = (gain[ch], shift[ch]);
        for ((&v, &m), &is) in row.iter().zip(&mean).zip(&inv_std) {
            let h = (v - m) * is;
            xhat.push(h);
            out.push(ga * h + sh);
        }
    }
    (out, LayerNormCache { xhat, inv_std })
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn layer_norm_backward<S: Scalar>(
    g: &[S],
    cache: &LayerNormCache<S>,
    gain: &[S],
    c: usize,
    l: usize,
    dx: Option<&mut [S]>,
    dgain: Option<&mut [S]>,
    dshift: Option<&mut [S]>,
) {
    if let Some(dgain) = dgain {
        for ((d, grow), hrow) in dgain.iter_mut().zip(g.chunks_exact(l)).zip(cache.xhat.chunks_exact(l)) {
            let mut s = S::ZERO;
            for (&gv, &h) in grow.iter().zip(hrow) {
                s += gv * h;
            }
            *d += s;
        }
    }
    if let Some(dshift) = dshift {
        row_sums_into(g, l, dshift);
    }
    if let Some(dx) = dx {
        // dxhat = g * gain; dx = inv/C * (C*dxhat - sum(dxhat) - xhat*sum(dxhat*xhat))
        let mut sum_d = vec![S::ZERO; l];
        let mut sum_dh = vec![S::ZERO; l];
        for ((grow, hrow), &ga) in g.chunks_exact(l).zip(cache.xhat.chunks_exact(l)).zip(gain) {
            for (((sd, sdh), &gv), &h) in sum_d.iter_mut().zip(sum_dh.iter_mut()).zip(grow).zip(hrow) {
                let d = gv * ga;
                *sd += d;
                *sdh += d * h;
            }
        }
        let cs = S::from_f64(c as f64);
        let inv_c = S::ONE / cs;
        let scale: Vec<S> = cache.inv_std.iter().map(|&v| v * inv_c).collect();
        let rows = g.chunks_exact(l).zip(cache.xhat.chunks_exact(l)).zip(dx.chunks_exact_mut(l));
        for (((grow, hrow), drow), &ga) in rows.zip(gain) {
            let cg = cs * ga;
            for i in 0..l {
                drow[i] += scale[i] * (cg * grow[i] - sum_d[i] - hrow[i] * sum_dh[i]);
            }
        }
    }
}

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact GELU `x·Φ(x)`; also returns `Φ(x)` for the backward pass.
pub(crate) fn gelu_forward<S: Scalar>(x: &[S]) -> (Vec<S>, Vec<S>) {
    let half = S::from_f64(0.5);
    let k = S::from_f64(FRAC_1_SQRT_2);
    let cdf: Vec<S> = x.iter().map(|&v| half * (S::ONE + (v * k).erf())).collect();
    let out = x.iter().zip(&cdf).map(|(&v, &p)| v * p).collect();
    (out, cdf)
}

pub(crate) fn gelu_backward<S: Scalar>(g: &[S], x: &[S], cdf: &[S], dx: &mut [S]) {
    let half = S::from_f64(0.5);
    let k = S::from_f64(FRAC_1_SQRT_2PI);
    for i in 0..g.len() {
        let v = x[i];
        let pdf = k * (-(half * v * v)).exp();
        dx[i] += g[i] * (cdf[i] + v * pdf);
    }
}

/// Sums of squared deviations and cross products of a pair of rows.
pub(crate) struct PairStats {
    pub syy: f64,
    pub spp: f64,
    pub syp: f64,
    pub mean_y: f64,
    pub mean_p: f64,
}

pub(crate) fn pair_stats<S: Scalar>(y: &[S], p: &[S]) -> PairStats {
    let n = y.len() as f64;
    let mean_y = y.iter().map(|v| v.to_f64()).sum::<f64>() / n;
    let mean_p = p.iter().map(|v| v.to_f64()).sum::<f64>() / n;
    let (mut syy, mut spp, mut syp) = (0.0, 0.0, 0.0);
    for (a, b) in y.iter().zip(p) {
        let dy = a.to_f64() - mean_y;
        let dp = b.to_f64() - mean_p;
        syy += dy * dy;
        spp += dp * dp;
        syp += dy * dp;
    }
    PairStats {
        syy,
        spp,
        syp,
        mean_y,
        mean_p,
    }
}

/// True when the row's spread is at rounding-noise level for its precision.
pub(crate) fn is_degenerate<S: Scalar>(row: &[S], ss: f64) -> bool {
    let scale = row.iter().fold(1.0f64, |m, v| m.max(v.to_f64().abs()));
    let tol = 4.0 * S::epsilon().to_f64() * scale;
    ss <= row.len() as f64 * tol * tol
}
