use neurosiren::diffcore::{primitive_suite, Mode, OpKind, Rng, Tape, Tensor, Var, LAYER_NORM_EPS};
use neurosiren::Error;
use proptest::prelude::*;

fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

fn random(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    t(shape, &(0..n).map(|_| rng.normal()).collect::<Vec<_>>())
}

fn run1(f: impl FnOnce(&mut Tape<f64>) -> Var) -> Vec<f64> {
    let mut tape = Tape::new();
    let v = f(&mut tape);
    tape.value(v).data().to_vec()
}

fn close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
    }
}

// brute-force cross-correlation with zero padding, independent of im2col
fn naive_conv(x: &Tensor<f64>, k: &Tensor<f64>, b: &Tensor<f64>) -> Vec<f64> {
    let (c_in, l) = (x.shape()[0], x.shape()[1]);
    let (c_out, ks) = (k.shape()[0], k.shape()[2]);
    let pad = (ks / 2) as isize;
    let mut out = vec![0.0; c_out * l];
    for o in 0..c_out {
        for tt in 0..l {
            let mut s = b.data()[o];
            for i in 0..c_in {
                for j in 0..ks {
                    let src = tt as isize + j as isize - pad;
                    if src >= 0 && (src as usize) < l {
                        s += k.data()[(o * c_in + i) * ks + j] * x.data()[i * l + src as usize];
                    }
                }
            }
            out[o * l + tt] = s;
        }
    }
    out
}

#[test]
fn affine_examples() {
    let out = run1(|tp| {
        let x = tp.constant(t(&[2], &[5.0, 7.0]));
        let w = tp.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let b = tp.constant(t(&[2], &[0.0, 0.0]));
        tp.affine(x, w, b).unwrap()
    });
    assert_eq!(out, vec![5.0, 7.0]);
    let out = run1(|tp| {
        let x = tp.constant(t(&[2], &[1.0, 1.0]));
        let w = tp.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let b = tp.constant(t(&[2], &[0.0, 1.0]));
        tp.affine(x, w, b).unwrap()
    });
    assert_eq!(out, vec![3.0, 8.0]);
    let out = run1(|tp| {
        let x = tp.constant(t(&[3], &[-4.0, 9.0, 1.5]));
        let w = tp.constant(Tensor::zeros(&[2, 3]));
        let b = tp.constant(t(&[2], &[2.0, 2.0]));
        tp.affine(x, w, b).unwrap()
    });
    assert_eq!(out, vec![2.0, 2.0]);
}

#[test]
fn affine_shape_mismatch_names_both_shapes() {
    let mut tp = Tape::<f64>::new();
    let x = tp.constant(Tensor::zeros(&[3]));
    let w = tp.constant(Tensor::zeros(&[2, 4]));
    let b = tp.constant(Tensor::zeros(&[2]));
    let msg = tp.affine(x, w, b).unwrap_err().to_string();
    assert!(msg.contains("[2, 4]") && msg.contains("[3]"), "{msg}");
}

#[test]
fn sine_examples() {
    let pi = std::f64::consts::PI;
    assert_eq!(run1(|tp| { let z = tp.constant(t(&[1], &[0.0])); tp.sine(z, 30.0).unwrap() }), vec![0.0]);
    close(&run1(|tp| { let z = tp.constant(t(&[1], &[pi / 2.0])); tp.sine(z, 1.0).unwrap() }), &[1.0], 1e-15);
    close(&run1(|tp| { let z = tp.constant(t(&[1], &[pi / 60.0])); tp.sine(z, 30.0).unwrap() }), &[1.0], 1e-15);
    let mut tp = Tape::<f64>::new();
    let z = tp.constant(t(&[1], &[0.0]));
    assert!(matches!(tp.sine(z, 0.0), Err(Error::Config(_))));
    assert!(matches!(tp.sine(z, -1.0), Err(Error::Config(_))));
}

#[test]
fn conv1d_examples() {
    let x = t(&[2, 3], &[1.0, 2.0, 3.0, -1.0, 0.5, 4.0]);
    let out = run1(|tp| {
        let xv = tp.constant(x.clone());
        let k = tp.constant(t(&[2, 2, 1], &[1.0, 0.0, 0.0, 1.0]));
        let b = tp.constant(Tensor::zeros(&[2]));
        tp.conv1d(xv, k, b).unwrap()
    });
    assert_eq!(out, x.data());
    let out = run1(|tp| {
        let xv = tp.constant(t(&[1, 3], &[1.0, 2.0, 3.0]));
        let k = tp.constant(t(&[1, 1, 3], &[1.0, 1.0, 1.0]));
        let b = tp.constant(Tensor::zeros(&[1]));
        tp.conv1d(xv, k, b).unwrap()
    });
    assert_eq!(out, vec![3.0, 6.0, 5.0]);
    let out = run1(|tp| {
        let xv = tp.constant(x.clone());
        let k = tp.constant(Tensor::zeros(&[1, 2, 5]));
        let b = tp.constant(t(&[1], &[0.25]));
        tp.conv1d(xv, k, b).unwrap()
    });
    assert_eq!(out, vec![0.25; 3]);
    let mut tp = Tape::<f64>::new();
    let xv = tp.constant(x);
    let k = tp.constant(Tensor::zeros(&[1, 2, 4]));
    let b = tp.constant(Tensor::zeros(&[1]));
    assert!(matches!(tp.conv1d(xv, k, b), Err(Error::Config(_))));
}

#[test]
fn conv1d_matches_brute_force() {
    let mut rng = Rng::new(5);
    for (c_in, c_out, l, ks) in [(3, 4, 9, 5), (1, 2, 2, 5), (2, 3, 7, 3), (5, 1, 4, 1), (2, 2, 3, 7)] {
        let x = random(&[c_in, l], &mut rng);
        let k = random(&[c_out, c_in, ks], &mut rng);
        let b = random(&[c_out], &mut rng);
        let got = run1(|tp| {
            let (xv, kv, bv) = (tp.constant(x.clone()), tp.constant(k.clone()), tp.constant(b.clone()));
            tp.conv1d(xv, kv, bv).unwrap()
        });
        close(&got, &naive_conv(&x, &k, &b), 1e-12);
    }
}

#[test]
fn maxpool_examples() {
    let pool = |d: &[f64]| run1(|tp| { let x = tp.constant(t(&[1, d.len()], d)); tp.maxpool1d(x).unwrap() });
    assert_eq!(pool(&[1.0, 3.0, 2.0, 4.0]), vec![3.0, 4.0]);
    assert_eq!(pool(&[2.5; 6]), vec![2.5; 3]);
    assert_eq!(pool(&[-1.0, -3.0]), vec![-1.0]);
    let mut tp = Tape::<f64>::new();
    let x = tp.constant(Tensor::zeros(&[1, 3]));
    assert!(matches!(tp.maxpool1d(x), Err(Error::Dimension(_))));
}

#[test]
fn maxpool_ties_route_gradient_to_earlier_index() {
    let mut tp = Tape::<f64>::new();
    let x = tp.param(t(&[1, 4], &[2.0, 2.0, 1.0, 1.0]));
    let p = tp.maxpool1d(x).unwrap();
    let s = tp.weighted_sum(p, &[1.0, 1.0]).unwrap();
    tp.backward(s).unwrap();
    assert_eq!(tp.grad(x).unwrap(), &[1.0, 0.0, 1.0, 0.0]);
}

#[test]
fn upsample_examples() {
    let up = |d: &[f64], f: usize| run1(|tp| { let x = tp.constant(t(&[1, d.len()], d)); tp.upsample_nn(x, f).unwrap() });
    assert_eq!(up(&[1.0, 2.0], 2), vec![1.0, 1.0, 2.0, 2.0]);
    assert_eq!(up(&[3.0, -2.0, 7.0], 1), vec![3.0, -2.0, 7.0]);
    assert_eq!(up(&[0.0, 0.0], 2), vec![0.0; 4]);
    let mut tp = Tape::<f64>::new();
    let x = tp.constant(Tensor::zeros(&[1, 2]));
    assert!(matches!(tp.upsample_nn(x, 0), Err(Error::Config(_))));
}

#[test]
fn layer_norm_examples() {
    let ln = |x: Tensor<f64>, g: &[f64], s: &[f64], eps: f64| {
        run1(|tp| {
            let c = x.shape()[0];
            let (xv, gv, sv) = (tp.constant(x), tp.constant(t(&[c], g)), tp.constant(t(&[c], s)));
            tp.layer_norm(xv, gv, sv, eps).unwrap()
        })
    };
    close(&ln(t(&[3, 2], &[4.0, -1.0, 4.0, -1.0, 4.0, -1.0]), &[1.0; 3], &[0.0; 3], LAYER_NORM_EPS), &[0.0; 6], 1e-12);
    close(&ln(t(&[2, 2], &[1.0, 5.0, -3.0, 2.0]), &[0.0; 2], &[0.7, 0.7], LAYER_NORM_EPS), &[0.7; 4], 0.0);
    close(&ln(t(&[2, 1], &[1.0, 3.0]), &[1.0; 2], &[0.0; 2], 1e-300), &[-1.0, 1.0], 1e-12);
}

#[test]
fn gelu_examples() {
    let g = |v: f64| run1(|tp| { let x = tp.constant(t(&[1], &[v])); tp.gelu(x) })[0];
    assert_eq!(g(0.0), 0.0);
    assert!((g(1.0) - 0.841_344_746_068_543).abs() < 1e-14);
    assert!((g(12.0) - 12.0).abs() < 1e-12);
    assert!(g(-12.0).abs() < 1e-12);
}

#[test]
fn dropout_contracts() {
    let x = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let mut rng = Rng::new(9);
    let mut tp = Tape::<f64>::new();
    let xv = tp.constant(x.clone());
    let a = tp.dropout(xv, 0.0, Mode::Train, &mut rng).unwrap();
    let b = tp.dropout(xv, 0.3, Mode::Eval, &mut rng).unwrap();
    assert_eq!(tp.value(a).data(), x.data());
    assert_eq!(tp.value(b), tp.value(xv));
    assert!(matches!(tp.dropout(xv, 1.0, Mode::Train, &mut rng), Err(Error::Config(_))));

    let masked = |seed| {
        let mut rng = Rng::new(seed);
        run1(|tp| { let xv = tp.constant(x.clone()); tp.dropout(xv, 0.3, Mode::Train, &mut rng).unwrap() })
    };
    assert_eq!(masked(4), masked(4));
    for v in masked(4).iter().zip(x.data()) {
        assert!(*v.0 == 0.0 || (*v.0 - v.1 / 0.7).abs() < 1e-12);
    }
}

#[test]
fn dropout_is_unbiased_over_many_draws() {
    let n = 100_000;
    let x = Tensor::full(&[1, n], 2.0f64);
    let mut rng = Rng::new(2024);
    let out = run1(|tp| { let xv = tp.constant(x); tp.dropout(xv, 0.3, Mode::Train, &mut rng).unwrap() });
    let mean = out.iter().sum::<f64>() / n as f64;
    assert!((mean - 2.0).abs() / 2.0 < 0.01, "mean {mean}");
}

#[test]
fn every_primitive_passes_gradient_check() {
    let seeds: Vec<u64> = (1000..1006).collect();
    let checks = primitive_suite(&seeds, 1e-5, None).unwrap();
    assert_eq!(checks.len(), 6 * OpKind::ALL.len());
    for c in checks {
        assert!(c.report.max_rel_error <= 1e-4, "{} seed {}: {:?}", c.op, c.seed, c.report);
    }
}

#[test]
fn corrupted_primitive_is_caught_and_only_that_one() {
    for bad in [OpKind::Conv1d, OpKind::Gelu, OpKind::CorrLoss] {
        let checks = primitive_suite(&[7], 1e-5, Some(bad)).unwrap();
        for c in checks {
            let failed = c.report.max_rel_error > 1e-4;
            let uses_bad = c.op == bad || bad == OpKind::WeightedSum;
            assert_eq!(failed, uses_bad, "{} with {} corrupted: {:?}", c.op, bad, c.report);
        }
    }
}

#[test]
fn backward_populates_every_parameter_gradient() {
    let mut tp = Tape::<f64>::new();
    let x = tp.param(t(&[2, 4], &[1.0, -2.0, 0.5, 3.0, 0.1, 0.2, -0.3, 0.4]));
    let unused = tp.param(t(&[3], &[1.0, 2.0, 3.0]));
    let g = tp.gelu(x);
    let s = tp.sum_squares(g);
    tp.backward(s).unwrap();
    assert_eq!(tp.grad(x).unwrap().len(), 8);
    assert_eq!(tp.grad(unused).unwrap(), &[0.0; 3]);
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut tp = Tape::<f64>::new();
    let x = tp.param(Tensor::zeros(&[3]));
    assert!(matches!(tp.backward(x), Err(Error::Dimension(_))));
}

fn linear_op(tp: &mut Tape<f64>, which: usize, x: &Tensor<f64>, w: &Tensor<f64>) -> Vec<f64> {
    let xv = tp.constant(x.clone());
    let v = match which {
        0 => {
            let wv = tp.constant(w.clone());
            let b = tp.constant(Tensor::zeros(&[w.shape()[0]]));
            tp.affine(xv, wv, b).unwrap()
        }
        1 => {
            let k = tp.constant(Tensor::new(vec![2, x.shape()[0], 3], w.data()[..6 * x.shape()[0]].to_vec()).unwrap());
            let b = tp.constant(Tensor::zeros(&[2]));
            tp.conv1d(xv, k, b).unwrap()
        }
        _ => tp.upsample_nn(xv, 2).unwrap(),
    };
    tp.value(v).data().to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn linear_ops_commute_with_scaling(seed in 0u64..10_000, a in -5.0f64..5.0) {
        let mut rng = Rng::new(seed);
        let x = random(&[3, 6], &mut rng);
        let w = random(&[4, 3], &mut rng);
        let w_big = random(&[6, 3], &mut rng);
        for which in 0..3 {
            let ww = if which == 1 { &w_big } else { &w };
            let mut tp = Tape::new();
            let base = linear_op(&mut tp, which, &x, ww);
            let scaled = linear_op(&mut tp, which, &x.map(|v| a * v), ww);
            for (s, b) in scaled.iter().zip(&base) {
                let want = a * b;
                prop_assert!((s - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn pool_after_upsample_is_identity(seed in 0u64..10_000, c in 1usize..5, l in 1usize..20) {
        let mut rng = Rng::new(seed);
        let x = random(&[c, l], &mut rng);
        let mut tp = Tape::new();
        let xv = tp.constant(x.clone());
        let up = tp.upsample_nn(xv, 2).unwrap();
        let back = tp.maxpool1d(up).unwrap();
        prop_assert_eq!(tp.value(back).data(), x.data());
    }

    #[test]
    fn eval_dropout_is_bitwise_identity(seed in 0u64..10_000, rate in 0.0f64..0.99) {
        let mut rng = Rng::new(seed);
        let x = random(&[2, 5], &mut rng).cast::<f32>();
        let mut tp = Tape::<f32>::new();
        let xv = tp.constant(x.clone());
        let y = tp.dropout(xv, rate, Mode::Eval, &mut rng).unwrap();
        prop_assert_eq!(tp.value(y).data(), x.data());
    }
}
