use criterion::{black_box, criterion_group, criterion_main, Criterion};
use neurosiren::baselines::{default_lag_taps, default_lambda_grid, fit_ridge_baseline, ridge_fit};
use neurosiren::model::{model_forward, ModelConfig, ModelParams};
use neurosiren::objective::OptimizerConfig;
use neurosiren::signal_prep::{design_butterworth, filter_signal, resample, FilterSpec};
use neurosiren::training::Trainer;
use neurosiren::{Mode, Rng};
use neurosiren_bench::{noise_dataset, noise_series, normal_tensor, window};

fn model(c: &mut Criterion) {
    let config = ModelConfig::default();
    let params = ModelParams::<f32>::init(&config, &mut Rng::new(1)).unwrap();
    let x = normal_tensor(&[30, 2048], 2);
    let mut group = c.benchmark_group("default model");
    group.sample_size(10);
    group.bench_function("forward", |bench| {
        bench.iter(|| black_box(model_forward(&params, &x, Mode::Eval, &mut Rng::new(0)).unwrap()))
    });
    let batch = vec![window(30, 4, 2048, 3)];
    let mut trainer = Trainer::new(params.clone(), OptimizerConfig::default(), Rng::new(4)).unwrap();
    group.bench_function("training step, one window", |bench| {
        bench.iter(|| black_box(trainer.step(&batch).unwrap()))
    });
    group.finish();
}

fn filtering(c: &mut Criterion) {
    let fs = 1000.0;
    let x = noise_series(1, 60_000, fs, 5);
    let bandpass = design_butterworth(&FilterSpec::Bandpass { low_hz: 1.0, high_hz: 100.0, order: 4 }, fs).unwrap();
    let notch = design_butterworth(&FilterSpec::Notch { freq_hz: 50.0, q: 30.0 }, fs).unwrap();
    let mut group = c.benchmark_group("60 s at 1 kHz");
    group.bench_function("bandpass filtfilt", |bench| {
        bench.iter(|| black_box(filter_signal(x.channel(0), &bandpass, true).unwrap()))
    });
    group.bench_function("notch filtfilt", |bench| {
        bench.iter(|| black_box(filter_signal(x.channel(0), &notch, true).unwrap()))
    });
    group.bench_function("resample to 100 Hz", |bench| bench.iter(|| black_box(resample(&x, 100.0).unwrap())));
    group.finish();
}

fn ridge(c: &mut Criterion) {
    let mut rng = Rng::new(6);
    let (n, d, r) = (5000, 300, 4);
    let x: Vec<f64> = (0..n * d).map(|_| rng.normal()).collect();
    let y: Vec<f64> = (0..n * r).map(|_| rng.normal()).collect();
    let mut group = c.benchmark_group("ridge");
    group.sample_size(10);
    group.bench_function("fit 5000x300", |bench| bench.iter(|| black_box(ridge_fit(&x, &y, n, d, r, 1.0).unwrap())));
    let data = noise_dataset(30, 4, 12_000, 7);
    group.bench_function("lambda search, 30 channels, 120 s", |bench| {
        bench.iter(|| {
            black_box(fit_ridge_baseline(&data.eeg, &data.fmri, &default_lag_taps(), &default_lambda_grid(), 5).unwrap())
        })
    });
    group.finish();
}

criterion_group!(benches, model, filtering, ridge);
criterion_main!(benches);
