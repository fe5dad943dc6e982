use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use neurosiren::{Mode, Rng, Tape, Tensor};
use neurosiren_bench::normal_tensor;

fn conv1d(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv1d");
    for &(cin, cout, len) in &[(64, 64, 2048), (128, 256, 512), (256, 256, 256)] {
        let x = normal_tensor(&[cin, len], 1);
        let k = normal_tensor(&[cout, cin, 5], 2);
        let b = Tensor::<f32>::zeros(&[cout]);
        let id = format!("{cin}x{len}->{cout}");
        group.bench_with_input(BenchmarkId::new("forward", &id), &(), |bench, _| {
            bench.iter(|| {
                let mut t = Tape::new();
                let (xv, kv, bv) = (t.constant(x.clone()), t.constant(k.clone()), t.constant(b.clone()));
                black_box(t.conv1d(xv, kv, bv).unwrap());
            })
        });
        group.bench_with_input(BenchmarkId::new("forward_backward", &id), &(), |bench, _| {
            bench.iter(|| {
                let mut t = Tape::new();
                let (xv, kv, bv) = (t.param(x.clone()), t.param(k.clone()), t.param(b.clone()));
                let y = t.conv1d(xv, kv, bv).unwrap();
                let loss = t.sum_squares(y);
                t.backward(loss).unwrap();
                black_box(t.grad(kv).map(|g| g[0]));
            })
        });
    }
    group.finish();
}

/// Pointwise layer over time, the matrix product at the heart of the SIREN.
fn affine(c: &mut Criterion) {
    let x = normal_tensor(&[64, 2048], 3);
    let w = normal_tensor(&[64, 64], 4);
    let b = Tensor::<f32>::zeros(&[64]);
    c.bench_function("affine 64x64 over 2048 steps", |bench| {
        bench.iter(|| {
            let mut t = Tape::new();
            let (xv, wv, bv) = (t.param(x.clone()), t.param(w.clone()), t.param(b.clone()));
            let y = t.affine(xv, wv, bv).unwrap();
            let loss = t.sum_squares(y);
            t.backward(loss).unwrap();
            black_box(t.grad(wv).map(|g| g[0]));
        })
    });
}

fn elementwise(c: &mut Criterion) {
    let x = normal_tensor(&[64, 2048], 5);
    let g = Tensor::<f32>::full(&[64], 1.0);
    let b = Tensor::<f32>::zeros(&[64]);
    let mut group = c.benchmark_group("elementwise 64x2048");
    group.bench_function("baseline: sum of squares only", |bench| {
        bench.iter(|| {
            let mut t = Tape::new();
            let xv = t.param(x.clone());
            let loss = t.sum_squares(xv);
            t.backward(loss).unwrap();
        })
    });
    group.bench_function("layer_norm", |bench| {
        bench.iter(|| {
            let mut t = Tape::new();
            let (xv, gv, bv) = (t.param(x.clone()), t.param(g.clone()), t.param(b.clone()));
            let y = t.layer_norm(xv, gv, bv, 1e-5).unwrap();
            let loss = t.sum_squares(y);
            t.backward(loss).unwrap();
        })
    });
    group.bench_function("gelu", |bench| {
        bench.iter(|| {
            let mut t = Tape::new();
            let xv = t.param(x.clone());
            let y = t.gelu(xv);
            let loss = t.sum_squares(y);
            t.backward(loss).unwrap();
        })
    });
    group.bench_function("dropout", |bench| {
        let mut rng = Rng::new(6);
        bench.iter(|| {
            let mut t = Tape::new();
            let xv = t.param(x.clone());
            let y = t.dropout(xv, 0.3, Mode::Train, &mut rng).unwrap();
            let loss = t.sum_squares(y);
            t.backward(loss).unwrap();
        })
    });
    group.finish();
}

criterion_group!(benches, conv1d, affine, elementwise);
criterion_main!(benches);
