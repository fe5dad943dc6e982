use super::{grad_check_with, GradCheckReport, Mode, OpKind, Rng, Tape, Tensor, Var, LAYER_NORM_EPS};
use crate::error::Result;

/// One primitive checked under one seed.
#[derive(Clone, Debug)]
pub struct OpCheck {
    pub op: OpKind,
    pub seed: u64,
    pub report: GradCheckReport,
}

type Shapes = fn(&mut Rng) -> Vec<Vec<usize>>;
type Build = fn(&mut Tape<f64>, &[Var], &mut Rng) -> Result<Var>;

fn dim(rng: &mut Rng, lo: u64, hi: u64) -> usize {
    (lo + rng.below(hi - lo + 1)) as usize
}

fn fixed_target(shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let d = (0..n).map(|i| (i as f64 * 1.7).sin() + 0.1 * i as f64).collect();
    Tensor::new(shape.to_vec(), d).expect("shape matches length")
}

fn case(op: OpKind) -> (Shapes, Build) {
    match op {
        OpKind::Affine => (
            |r| {
                let (m, n, l) = (dim(r, 1, 5), dim(r, 1, 5), dim(r, 1, 6));
                vec![vec![m, l], vec![n, m], vec![n]]
            },
            |tp, v, _| tp.affine(v[0], v[1], v[2]),
        ),
        OpKind::Sine => (|r| vec![vec![dim(r, 1, 4), dim(r, 1, 8)]], |tp, v, _| tp.sine(v[0], 30.0)),
        OpKind::Conv1d => (
            |r| {
                let (ci, co, l) = (dim(r, 1, 4), dim(r, 1, 4), dim(r, 1, 9));
                let k = [1, 3, 5][r.below(3) as usize];
                vec![vec![ci, l], vec![co, ci, k], vec![co]]
            },
            |tp, v, _| tp.conv1d(v[0], v[1], v[2]),
        ),
        OpKind::MaxPool1d => (|r| vec![vec![dim(r, 1, 4), 2 * dim(r, 1, 5)]], |tp, v, _| tp.maxpool1d(v[0])),
        OpKind::UpsampleNn => (|r| vec![vec![dim(r, 1, 4), dim(r, 1, 5)]], |tp, v, _| tp.upsample_nn(v[0], 3)),
        OpKind::LayerNorm => (
            |r| {
                let c = dim(r, 2, 6);
                vec![vec![c, dim(r, 1, 6)], vec![c], vec![c]]
            },
            |tp, v, _| tp.layer_norm(v[0], v[1], v[2], LAYER_NORM_EPS),
        ),
        OpKind::Gelu => (|r| vec![vec![dim(r, 1, 4), dim(r, 1, 8)]], |tp, v, _| Ok(tp.gelu(v[0]))),
        OpKind::Dropout => (
            |r| vec![vec![dim(r, 1, 4), dim(r, 1, 8)]],
            |tp, v, r| tp.dropout(v[0], 0.3, Mode::Train, r),
        ),
        OpKind::Mse => (|r| vec![vec![dim(r, 1, 3), dim(r, 2, 8)]], |tp, v, _| {
            let target = fixed_target(tp.value(v[0]).shape());
            tp.mse_loss(v[0], &target)
        }),
        OpKind::CorrLoss => (|r| vec![vec![dim(r, 1, 3), dim(r, 3, 10)]], |tp, v, _| {
            let target = fixed_target(tp.value(v[0]).shape());
            tp.corr_loss(v[0], &target)
        }),
        OpKind::AddScaled => (
            |r| {
                let n = dim(r, 1, 5);
                vec![vec![n], vec![n]]
            },
            |tp, v, _| tp.add_scaled(v[0], v[1], 0.1),
        ),
        OpKind::WeightedSum => (|r| vec![vec![dim(r, 1, 3), dim(r, 1, 7)]], |_, v, _| Ok(v[0])),
        OpKind::SumSquares => (|r| vec![vec![dim(r, 1, 7)]], |tp, v, _| Ok(tp.sum_squares(v[0]))),
    }
}

/// Gradient-checks `op` on random shapes drawn from `seed`. Every output is
/// reduced to a scalar through a fixed random projection.
pub fn check_primitive(op: OpKind, seed: u64, eps: f64, corrupt: Option<OpKind>) -> Result<OpCheck> {
    let (shapes, build) = case(op);
    let mut rng = Rng::new(seed);
    let inputs: Vec<Tensor<f64>> = shapes(&mut rng)
        .into_iter()
        .map(|s| {
            let n = s.iter().product();
            Tensor::new(s, (0..n).map(|_| rng.normal()).collect()).expect("shape matches length")
        })
        .collect();
    let drop_seed = rng.next_u64();
    let weight_seed = rng.next_u64();
    let f = |tp: &mut Tape<f64>, vars: &[Var]| {
        let out = build(tp, vars, &mut Rng::new(drop_seed))?;
        let n = tp.value(out).len();
        let mut wr = Rng::new(weight_seed);
        let w: Vec<f64> = (0..n).map(|_| wr.normal()).collect();
        tp.weighted_sum(out, &w)
    };
    let report = grad_check_with(f, &inputs, eps, corrupt)?;
    Ok(OpCheck { op, seed, report })
}

/// Runs [`check_primitive`] for every primitive under each seed.
pub fn primitive_suite(seeds: &[u64], eps: f64, corrupt: Option<OpKind>) -> Result<Vec<OpCheck>> {
    let mut out = Vec::with_capacity(seeds.len() * OpKind::ALL.len());
    for op in OpKind::ALL {
        for &seed in seeds {
            out.push(check_primitive(op, seed, eps, corrupt)?);
        }
    }
    Ok(out)
}
