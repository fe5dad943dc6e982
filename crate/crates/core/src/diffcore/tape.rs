use std::fmt;

use super::kernels::{self as k, LayerNormCache};
use super::{Rng, Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Whether stochastic nodes (dropout) are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Primitive identity, used in diagnostics and gradient-check reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Affine,
    Sine,
    Conv1d,
    MaxPool1d,
    UpsampleNn,
    LayerNorm,
    Gelu,
    Dropout,
    Mse,
    CorrLoss,
    AddScaled,
    WeightedSum,
    SumSquares,
}

impl OpKind {
    pub const ALL: [OpKind; 13] = [
        OpKind::Affine,
        OpKind::Sine,
        OpKind::Conv1d,
        OpKind::MaxPool1d,
        OpKind::UpsampleNn,
        OpKind::LayerNorm,
        OpKind::Gelu,
        OpKind::Dropout,
        OpKind::Mse,
        OpKind::CorrLoss,
        OpKind::AddScaled,
        OpKind::WeightedSum,
        OpKind::SumSquares,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Affine => "affine",
            OpKind::Sine => "sine",
            OpKind::Conv1d => "conv1d",
            OpKind::MaxPool1d => "maxpool1d",
            OpKind::UpsampleNn => "upsample_nn",
            OpKind::LayerNorm => "layer_norm",
            OpKind::Gelu => "gelu",
            OpKind::Dropout => "dropout",
            OpKind::Mse => "mse_loss",
            OpKind::CorrLoss => "corr_loss",
            OpKind::AddScaled => "add_scaled",
            OpKind::WeightedSum => "weighted_sum",
            OpKind::SumSquares => "sum_squares",
        }
    }

    pub fn from_name(name: &str) -> Option<OpKind> {
        OpKind::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

enum Op<S> {
    Leaf,
    Affine { x: Var, w: Var, b: Var },
    Sine { z: Var, omega0: S },
    Conv1d { x: Var, kernels: Var, bias: Var, cols: Vec<S> },
    MaxPool { x: Var, argmax: Vec<u32> },
    Upsample { x: Var, factor: usize },
    LayerNorm { x: Var, gain: Var, shift: Var, cache: LayerNormCache<S> },
    Gelu { x: Var, cdf: Vec<S> },
    Dropout { x: Var, mask: Vec<S> },
    Mse { pred: Var, target: Vec<S> },
    CorrLoss { pred: Var, target: Vec<S>, rows: usize },
    AddScaled { a: Var, b: Var, alpha: S },
    WeightedSum { x: Var, weights: Vec<S> },
    SumSquares { x: Var },
}

impl<S> Op<S> {
    fn kind(&self) -> Option<OpKind> {
        Some(match self {
            Op::Leaf => return None,
            Op::Affine { .. } => OpKind::Affine,
            Op::Sine { .. } => OpKind::Sine,
            Op::Conv1d { .. } => OpKind::Conv1d,
            Op::MaxPool { .. } => OpKind::MaxPool1d,
            Op::Upsample { .. } => OpKind::UpsampleNn,
            Op::LayerNorm { .. } => OpKind::LayerNorm,
            Op::Gelu { .. } => OpKind::Gelu,
            Op::Dropout { .. } => OpKind::Dropout,
            Op::Mse { .. } => OpKind::Mse,
            Op::CorrLoss { .. } => OpKind::CorrLoss,
            Op::AddScaled { .. } => OpKind::AddScaled,
            Op::WeightedSum { .. } => OpKind::WeightedSum,
            Op::SumSquares { .. } => OpKind::SumSquares,
        })
    }
}

struct Node<S> {
    tensor: Tensor<S>,
    op: Op<S>,
}

/// Reverse-mode recording of one forward evaluation.
///
/// Every primitive pushes its output together with whatever context its
/// backward rule needs. Outputs of ops whose inputs are all constants are
/// recorded as constants, so inference on a tape costs no extra memory.
/// A tape is owned by a single thread and used for exactly one backward pass.
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
    corrupt: Option<OpKind>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

fn same_shape(op: &str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::dim(format!("{op}: shapes {a:?} and {b:?} differ")));
    }
    Ok(())
}

fn as_signal(op: &str, shape: &[usize]) -> Result<(usize, usize)> {
    match shape {
        [c, l] => Ok((*c, *l)),
        s => Err(Error::dim(format!("{op}: expected [channels × length], got {s:?}"))),
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            corrupt: None,
        }
    }

    /// Test fixture: scale the backward pass of one primitive by 1.5 so that
    /// gradient checking has a known-bad implementation to catch.
    #[doc(hidden)]
    pub fn with_corrupted_backward(mut self, kind: Option<OpKind>) -> Self {
        self.corrupt = kind;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<S>, requires_grad: bool, op: Op<S>) -> Var {
        let mut tensor = Tensor::new(shape, data).expect("op produced inconsistent shape");
        tensor.requires_grad = requires_grad;
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node { tensor, op });
        Var(self.nodes.len() - 1)
    }

    /// Record an input. Its `requires_grad` flag decides whether it receives
    /// a gradient.
    pub fn leaf(&mut self, mut tensor: Tensor<S>) -> Var {
        tensor.grad = None;
        self.nodes.push(Node {
            tensor,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, tensor: Tensor<S>) -> Var {
        self.leaf(tensor.with_grad())
    }

    pub fn constant(&mut self, mut tensor: Tensor<S>) -> Var {
        tensor.requires_grad = false;
        self.leaf(tensor)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].tensor
    }

    pub fn grad(&self, v: Var) -> Option<&[S]> {
        self.nodes[v.0].tensor.grad.as_deref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<S>> {
        self.nodes[v.0].tensor.grad.take()
    }

    pub fn into_tensor(mut self, v: Var) -> Tensor<S> {
        let mut t = std::mem::replace(&mut self.nodes[v.0].tensor, Tensor::scalar(S::ZERO));
        t.grad = None;
        t
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].tensor.requires_grad
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].tensor.shape()
    }

    fn data(&self, v: Var) -> &[S] {
        self.nodes[v.0].tensor.data()
    }

    /// `out[n, t] = Σ_m w[n, m]·x[m, t] + b[n]`, for `x` of shape `[M]` or
    /// `[M × L]` (applied independently at every column).
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (m, l) = self.value(x).matrix_dims()?;
        let (wn, wm) = match self.shape(w) {
            [n, m] => (*n, *m),
            s => return Err(Error::dim(format!("affine: weight must be rank 2, got {s:?}"))),
        };
        if wm != m || self.shape(b) != [wn] {
            return Err(Error::dim(format!(
                "affine: weight {:?}, bias {:?} incompatible with input {:?}",
                self.shape(w),
                self.shape(b),
                self.shape(x)
            )));
        }
        let out = k::affine_forward(self.data(w), self.data(x), self.data(b), wn, m, l);
        let shape = if self.value(x).rank() == 1 { vec![wn] } else { vec![wn, l] };
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(shape, out, rg, Op::Affine { x, w, b }))
    }

    /// `sin(ω₀·z)` elementwise.
    pub fn sine(&mut self, z: Var, omega0: f64) -> Result<Var> {
        if !(omega0 > 0.0) {
            return Err(Error::config(format!("sine: omega0 must be > 0, got {omega0}")));
        }
        let w = S::from_f64(omega0);
        let out = self.data(z).iter().map(|&v| (w * v).sin()).collect();
        let shape = self.shape(z).to_vec();
        let rg = self.rg(z);
        Ok(self.push(shape, out, rg, Op::Sine { z, omega0: w }))
    }

    /// Stride-1 cross-correlation with odd kernel length and symmetric zero
    /// padding of `(k−1)/2`; output length equals input length.
    pub fn conv1d(&mut self, x: Var, kernels: Var, bias: Var) -> Result<Var> {
        let (c_in, l) = as_signal("conv1d", self.shape(x))?;
        let (c_out, kc_in, ks) = match self.shape(kernels) {
            [a, b, c] => (*a, *b, *c),
            s => return Err(Error::dim(format!("conv1d: kernels must be rank 3, got {s:?}"))),
        };
        if ks % 2 == 0 {
            return Err(Error::config(format!("conv1d: kernel length must be odd, got {ks}")));
        }
        if kc_in != c_in || self.shape(bias) != [c_out] {
            return Err(Error::dim(format!(
                "conv1d: kernels {:?}, bias {:?} incompatible with input {:?}",
                self.shape(kernels),
                self.shape(bias),
                self.shape(x)
            )));
        }
        let (out, cols) =
            k::conv1d_forward(self.data(x), self.data(kernels), self.data(bias), c_in, c_out, l, ks);
        let rg = self.rg(x) || self.rg(kernels) || self.rg(bias);
        Ok(self.push(vec![c_out, l], out, rg, Op::Conv1d { x, kernels, bias, cols }))
    }

    /// Max pooling with window 2 and stride 2 along time.
    pub fn maxpool1d(&mut self, x: Var) -> Result<Var> {
        let (c, l) = as_signal("maxpool1d", self.shape(x))?;
        if l % 2 != 0 {
            return Err(Error::dim(format!("maxpool1d: length {l} is not even")));
        }
        let (out, argmax) = k::maxpool2_forward(self.data(x), c, l);
        let rg = self.rg(x);
        Ok(self.push(vec![c, l / 2], out, rg, Op::MaxPool { x, argmax }))
    }

    /// Nearest-neighbour upsampling: every sample repeated `factor` times.
    pub fn upsample_nn(&mut self, x: Var, factor: usize) -> Result<Var> {
        if factor < 1 {
            return Err(Error::config("upsample_nn: factor must be ≥ 1"));
        }
        let (c, l) = as_signal("upsample_nn", self.shape(x))?;
        let out = k::upsample_forward(self.data(x), factor);
        let rg = self.rg(x);
        Ok(self.push(vec![c, l * factor], out, rg, Op::Upsample { x, factor }))
    }

    /// Per-time-index normalization across channels, then per-channel gain
    /// and shift.
    pub fn layer_norm(&mut self, x: Var, gain: Var, shift: Var, eps: f64) -> Result<Var> {
        if !(eps > 0.0) {
            return Err(Error::config("layer_norm: eps must be > 0"));
        }
        let (c, l) = as_signal("layer_norm", self.shape(x))?;
        if self.shape(gain) != [c] || self.shape(shift) != [c] {
            return Err(Error::dim(format!(
                "layer_norm: gain {:?}, shift {:?} incompatible with input {:?}",
                self.shape(gain),
                self.shape(shift),
                self.shape(x)
            )));
        }
        let (out, cache) = k::layer_norm_forward(
            self.data(x),
            self.data(gain),
            self.data(shift),
            c,
            l,
            S::from_f64(eps),
        );
        let rg = self.rg(x) || self.rg(gain) || self.rg(shift);
        Ok(self.push(vec![c, l], out, rg, Op::LayerNorm { x, gain, shift, cache }))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let (out, cdf) = k::gelu_forward(self.data(x));
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        self.push(shape, out, rg, Op::Gelu { x, cdf })
    }

    /// Inverted dropout. Eval mode and `rate == 0` return `x` itself.
    pub fn dropout(&mut self, x: Var, rate: f64, mode: Mode, rng: &mut Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::config(format!("dropout: rate must be in [0, 1), got {rate}")));
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let keep = S::from_f64(1.0 / (1.0 - rate));
        // an element is dropped when a uniform 32-bit draw falls below rate·2³²
        let threshold = (rate * 4_294_967_296.0) as u64;
        let mut draws = vec![0u32; self.value(x).len()];
        rng.fill_u32(&mut draws);
        let mask: Vec<S> = draws
            .iter()
            .map(|&d| if (d as u64) < threshold { S::ZERO } else { keep })
            .collect();
        let out = self.data(x).iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        Ok(self.push(shape, out, rg, Op::Dropout { x, mask }))
    }

    /// Mean of squared differences against a constant target.
    pub fn mse_loss(&mut self, pred: Var, target: &Tensor<S>) -> Result<Var> {
        same_shape("mse_loss", self.shape(pred), target.shape())?;
        let n = S::from_f64(target.len() as f64);
        let mut acc = S::ZERO;
        for (&p, &t) in self.data(pred).iter().zip(target.data()) {
            let d = p - t;
            acc += d * d;
        }
        let rg = self.rg(pred);
        let op = Op::Mse {
            pred,
            target: if rg { target.data().to_vec() } else { Vec::new() },
        };
        Ok(self.push(vec![1], vec![acc / n], rg, op))
    }

    /// Mean over rows of the negative Pearson correlation between `pred` and
    /// a constant target. Rows where either side is constant contribute 0.
    pub fn corr_loss(&mut self, pred: Var, target: &Tensor<S>) -> Result<Var> {
        same_shape("corr_loss", self.shape(pred), target.shape())?;
        let (rows, l) = as_signal("corr_loss", target.shape())?;
        if l < 2 {
            return Err(Error::dim("corr_loss: need at least 2 samples per row"));
        }
        let p = self.data(pred);
        let mut total = 0.0;
        for r in 0..rows {
            let (yr, pr) = (target.row(r), &p[r * l..(r + 1) * l]);
            let st = k::pair_stats(yr, pr);
            if k::is_degenerate(yr, st.syy) || k::is_degenerate(pr, st.spp) {
                log::warn!("corr_loss: row {r} is constant; contributing 0");
                continue;
            }
            total -= (st.syp / (st.syy.sqrt() * st.spp.sqrt())).clamp(-1.0, 1.0);
        }
        let value = S::from_f64(total / rows as f64);
        let rg = self.rg(pred);
        let op = Op::CorrLoss {
            pred,
            target: if rg { target.data().to_vec() } else { Vec::new() },
            rows,
        };
        Ok(self.push(vec![1], vec![value], rg, op))
    }

    /// `a + α·b` for same-shape operands.
    pub fn add_scaled(&mut self, a: Var, b: Var, alpha: f64) -> Result<Var> {
        same_shape("add_scaled", self.shape(a), self.shape(b))?;
        let al = S::from_f64(alpha);
        let out = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| x + al * y)
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(shape, out, rg, Op::AddScaled { a, b, alpha: al }))
    }

    /// Scalar `Σ wᵢ·xᵢ` against constant weights.
    pub fn weighted_sum(&mut self, x: Var, weights: &[S]) -> Result<Var> {
        if weights.len() != self.value(x).len() {
            return Err(Error::dim(format!(
                "weighted_sum: {} weights for {} elements",
                weights.len(),
                self.value(x).len()
            )));
        }
        let mut acc = S::ZERO;
        for (&v, &w) in self.data(x).iter().zip(weights) {
            acc += v * w;
        }
        let rg = self.rg(x);
        let op = Op::WeightedSum {
            x,
            weights: weights.to_vec(),
        };
        Ok(self.push(vec![1], vec![acc], rg, op))
    }

    pub fn sum_squares(&mut self, x: Var) -> Var {
        let mut acc = S::ZERO;
        for &v in self.data(x) {
            acc += v * v;
        }
        let rg = self.rg(x);
        self.push(vec![1], vec![acc], rg, Op::SumSquares { x })
    }

    /// Propagate gradients from the scalar `loss` back through every recorded
    /// op, in reverse record order. Afterwards every `requires_grad` node
    /// recorded up to `loss` holds a gradient (zeros when unreachable).
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::dim(format!(
                "backward: loss must be a scalar, got shape {:?}",
                self.shape(loss)
            )));
        }
        if !self.rg(loss) {
            return Err(Error::config("backward: loss does not depend on any parameter"));
        }
        self.nodes[loss.0].tensor.grad = Some(vec![S::ONE]);
        for i in (0..=loss.0).rev() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &rest[0];
            let (Some(g), Some(kind)) = (node.tensor.grad.as_deref(), node.op.kind()) else {
                continue;
            };
            let scaled;
            let g = if self.corrupt == Some(kind) {
                scaled = g.iter().map(|&v| v * S::from_f64(1.5)).collect::<Vec<_>>();
                &scaled[..]
            } else {
                g
            };
            backward_node(&node.op, &node.tensor, g, before);
        }
        for node in &mut self.nodes[..=loss.0] {
            if node.tensor.requires_grad && node.tensor.grad.is_none() {
                node.tensor.grad = Some(vec![S::ZERO; node.tensor.len()]);
            }
        }
        Ok(())
    }
}

/// Gradient buffer of `v`, allocated on first use; `None` for constants.
fn grad_slot<S: Scalar>(nodes: &mut [Node<S>], v: Var) -> Option<&mut [S]> {
    let t = &mut nodes[v.0].tensor;
    if !t.requires_grad {
        return None;
    }
    let n = t.len();
    Some(t.grad.get_or_insert_with(|| vec![S::ZERO; n]).as_mut_slice())
}

/// Two distinct gradient slots at once (`a != b`).
fn grad_pair<S: Scalar>(
    nodes: &mut [Node<S>],
    a: Var,
    b: Var,
) -> (Option<&mut [S]>, Option<&mut [S]>) {
    assert_ne!(a, b);
    for v in [a, b] {
        let t = &mut nodes[v.0].tensor;
        if t.requires_grad && t.grad.is_none() {
            t.grad = Some(vec![S::ZERO; t.len()]);
        }
    }
    let (lo, hi, swap) = if a.0 < b.0 { (a.0, b.0, false) } else { (b.0, a.0, true) };
    let (left, right) = nodes.split_at_mut(hi);
    let first = left[lo].tensor.grad.as_deref_mut();
    let second = right[0].tensor.grad.as_deref_mut();
    if swap {
        (second, first)
    } else {
        (first, second)
    }
}

/// Runs `f` on the gradient buffer of `v` while still allowing reads of
/// every node's value.
fn with_grad<S: Scalar>(nodes: &mut [Node<S>], v: Var, f: impl FnOnce(&mut [S], &[Node<S>])) {
    let t = &mut nodes[v.0].tensor;
    if !t.requires_grad {
        return;
    }
    let mut g = t.grad.take().unwrap_or_else(|| vec![S::ZERO; t.len()]);
    f(&mut g, nodes);
    nodes[v.0].tensor.grad = Some(g);
}

fn grad_triple<S: Scalar>(
    nodes: &mut [Node<S>],
    a: Var,
    b: Var,
    c: Var,
) -> [Option<Vec<S>>; 3] {
    // taken out and put back by the caller; keeps the borrow checker simple
    [a, b, c].map(|v| {
        let t = &mut nodes[v.0].tensor;
        if t.requires_grad {
            Some(t.grad.take().unwrap_or_else(|| vec![S::ZERO; t.len()]))
        } else {
            None
        }
    })
}

fn restore<S: Scalar>(nodes: &mut [Node<S>], vars: [Var; 3], grads: [Option<Vec<S>>; 3]) {
    for (v, g) in vars.into_iter().zip(grads) {
        if let Some(g) = g {
            nodes[v.0].tensor.grad = Some(g);
        }
    }
}

fn backward_node<S: Scalar>(op: &Op<S>, out: &Tensor<S>, g: &[S], nodes: &mut [Node<S>]) {
    match op {
        Op::Leaf => {}
        Op::Affine { x, w, b } => {
            let (m, l) = nodes[x.0].tensor.matrix_dims().expect("checked in forward");
            let n = nodes[w.0].tensor.shape()[0];
            let mut grads = grad_triple(nodes, *w, *x, *b);
            let [dw, dx, db] = &mut grads;
            k::affine_backward(
                g,
                nodes[w.0].tensor.data(),
                nodes[x.0].tensor.data(),
                n,
                m,
                l,
                dw.as_deref_mut(),
                dx.as_deref_mut(),
                db.as_deref_mut(),
            );
            restore(nodes, [*w, *x, *b], grads);
        }
        Op::Sine { z, omega0 } => {
            with_grad(nodes, *z, |dz, nodes| {
                let zs = nodes[z.0].tensor.data();
                for ((d, &gi), &zi) in dz.iter_mut().zip(g).zip(zs) {
                    *d += gi * *omega0 * (*omega0 * zi).cos();
                }
            });
        }
        Op::Conv1d {
            x,
            kernels,
            bias,
            cols,
        } => {
            let (c_in, l) = (nodes[x.0].tensor.shape()[0], nodes[x.0].tensor.shape()[1]);
            let (c_out, ks) = (nodes[kernels.0].tensor.shape()[0], nodes[kernels.0].tensor.shape()[2]);
            let mut grads = grad_triple(nodes, *kernels, *bias, *x);
            let [dk, db, dx] = &mut grads;
            let cols: &[S] = if ks == 1 { nodes[x.0].tensor.data() } else { cols };
            k::conv1d_backward(
                g,
                cols,
                nodes[kernels.0].tensor.data(),
                c_in,
                c_out,
                l,
                ks,
                dk.as_deref_mut(),
                db.as_deref_mut(),
                dx.as_deref_mut(),
            );
            restore(nodes, [*kernels, *bias, *x], grads);
        }
        Op::MaxPool { x, argmax } => {
            if let Some(dx) = grad_slot(nodes, *x) {
                k::maxpool2_backward(g, argmax, dx);
            }
        }
        Op::Upsample { x, factor } => {
            if let Some(dx) = grad_slot(nodes, *x) {
                k::upsample_backward(g, *factor, dx);
            }
        }
        Op::LayerNorm {
            x,
            gain,
            shift,
            cache,
        } => {
            let (c, l) = (out.shape()[0], out.shape()[1]);
            let mut grads = grad_triple(nodes, *x, *gain, *shift);
            let [dx, dg, ds] = &mut grads;
            k::layer_norm_backward(
                g,
                cache,
                nodes[gain.0].tensor.data(),
                c,
                l,
                dx.as_deref_mut(),
                dg.as_deref_mut(),
                ds.as_deref_mut(),
            );
            restore(nodes, [*x, *gain, *shift], grads);
        }
        Op::Gelu { x, cdf } => {
            with_grad(nodes, *x, |dx, nodes| {
                k::gelu_backward(g, nodes[x.0].tensor.data(), cdf, dx);
            });
        }
        Op::Dropout { x, mask } => {
            if let Some(dx) = grad_slot(nodes, *x) {
                for ((d, &gi), &m) in dx.iter_mut().zip(g).zip(mask) {
                    *d += gi * m;
                }
            }
        }
        Op::Mse { pred, target } => {
            let scale = S::from_f64(2.0 / target.len() as f64) * g[0];
            with_grad(nodes, *pred, |dp, nodes| {
                let ps = nodes[pred.0].tensor.data();
                for ((d, &p), &t) in dp.iter_mut().zip(ps).zip(target) {
                    *d += scale * (p - t);
                }
            });
        }
        Op::CorrLoss { pred, target, rows } => {
            let l = target.len() / rows;
            let upstream = g[0].to_f64() / *rows as f64;
            with_grad(nodes, *pred, |dp, nodes| {
                let ps = nodes[pred.0].tensor.data();
                for r in 0..*rows {
                    let (yr, pr) = (&target[r * l..(r + 1) * l], &ps[r * l..(r + 1) * l]);
                    let st = k::pair_stats(yr, pr);
                    if k::is_degenerate(yr, st.syy) || k::is_degenerate(pr, st.spp) {
                        continue;
                    }
                    let (sy, sp) = (st.syy.sqrt(), st.spp.sqrt());
                    let rr = st.syp / (sy * sp);
                    let drow = &mut dp[r * l..(r + 1) * l];
                    for i in 0..l {
                        let yc = yr[i].to_f64() - st.mean_y;
                        let pc = pr[i].to_f64() - st.mean_p;
                        let dr = (yc / sy - rr * pc / sp) / sp;
                        drow[i] += S::from_f64(-upstream * dr);
                    }
                }
            });
        }
        Op::AddScaled { a, b, alpha } if a == b => {
            if let Some(da) = grad_slot(nodes, *a) {
                for (d, &gi) in da.iter_mut().zip(g) {
                    *d += gi + *alpha * gi;
                }
            }
        }
        Op::AddScaled { a, b, alpha } => {
            let (da, db) = grad_pair(nodes, *a, *b);
            if let Some(da) = da {
                for (d, &gi) in da.iter_mut().zip(g) {
                    *d += gi;
                }
            }
            if let Some(db) = db {
                for (d, &gi) in db.iter_mut().zip(g) {
                    *d += *alpha * gi;
                }
            }
        }
        Op::WeightedSum { x, weights } => {
            if let Some(dx) = grad_slot(nodes, *x) {
                for (d, &w) in dx.iter_mut().zip(weights) {
                    *d += g[0] * w;
                }
            }
        }
        Op::SumSquares { x } => {
            let two = S::from_f64(2.0) * g[0];
            with_grad(nodes, *x, |dx, nodes| {
                for (d, &v) in dx.iter_mut().zip(nodes[x.0].tensor.data()) {
                    *d += two * v;
                }
            });
        }
    }
}
