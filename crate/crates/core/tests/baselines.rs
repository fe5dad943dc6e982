use neurosiren::baselines::*;
use neurosiren::data::{synth_generate, SynthConfig, SynthTarget};
use neurosiren::objective::pearson_r;
use neurosiren::signal_prep::TimeSeries;
use neurosiren::{Error, Rng};

fn random(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.normal()).collect()
}

/// `Y = X·W*` for row-major `X [n×d]` and `W* [d×r]`.
fn planted(n: usize, d: usize, r: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rng = Rng::new(seed);
    let x = random(&mut rng, n * d);
    let w = random(&mut rng, d * r);
    let mut y = vec![0.0; n * r];
    for i in 0..n {
        for j in 0..r {
            y[i * r + j] = (0..d).map(|k| x[i * d + k] * w[k * r + j]).sum();
        }
    }
    (x, y, w)
}

/// Regularized objective `‖Y − XW − b‖² + λ‖W‖²` for one target column.
fn objective(x: &[f64], y: &[f64], n: usize, d: usize, w: &[f64], b: f64, lambda: f64) -> f64 {
    let sse: f64 = (0..n)
        .map(|i| {
            let p: f64 = (0..d).map(|k| x[i * d + k] * w[k]).sum::<f64>() + b;
            (y[i] - p).powi(2)
        })
        .sum();
    sse + lambda * w.iter().map(|v| v * v).sum::<f64>()
}

#[test]
fn recovers_planted_weights() {
    let (x, y, w_star) = planted(200, 5, 3, 1);
    let (w, b, rel) = ridge_fit(&x, &y, 200, 5, 3, 1e-10).unwrap();
    for roi in 0..3 {
        for k in 0..5 {
            assert!((w[roi * 5 + k] - w_star[k * 3 + roi]).abs() <= 1e-6);
        }
        assert!(b[roi].abs() < 1e-8);
    }
    assert!(rel <= 1e-8);
}

#[test]
fn least_squares_limit_and_residual() {
    let mut rng = Rng::new(2);
    let x = random(&mut rng, 300 * 6);
    let y = random(&mut rng, 300 * 2);
    let (w, b, rel) = ridge_fit(&x, &y, 300, 6, 2, 0.0).unwrap();
    assert!(rel <= 1e-10);
    // gradient of the squared error vanishes at the least-squares solution
    for roi in 0..2 {
        for k in 0..6 {
            let g: f64 = (0..300)
                .map(|i| {
                    let p: f64 = (0..6).map(|j| x[i * 6 + j] * w[roi * 6 + j]).sum::<f64>() + b[roi];
                    (p - y[i * 2 + roi]) * x[i * 6 + k]
                })
                .sum();
            assert!(g.abs() < 1e-9, "{g}");
        }
    }
}

#[test]
fn huge_lambda_shrinks_to_zero() {
    let mut rng = Rng::new(3);
    let x = random(&mut rng, 100 * 4);
    let y = random(&mut rng, 100);
    let (w, _, _) = ridge_fit(&x, &y, 100, 4, 1, 1e12).unwrap();
    assert!(w.iter().all(|v| v.abs() <= 1e-6));
}

#[test]
fn solution_is_the_regularized_minimizer() {
    let mut rng = Rng::new(4);
    let (n, d, lambda) = (80, 4, 3.0);
    let x = random(&mut rng, n * d);
    let y = random(&mut rng, n);
    let (w, b, _) = ridge_fit(&x, &y, n, d, 1, lambda).unwrap();
    let best = objective(&x, &y, n, d, &w, b[0], lambda);
    for _ in 0..100 {
        let probe: Vec<f64> = w.iter().map(|v| v + if rng.uniform() < 0.5 { -1e-3 } else { 1e-3 }).collect();
        let db = if rng.uniform() < 0.5 { -1e-3 } else { 1e-3 };
        assert!(objective(&x, &y, n, d, &probe, b[0] + db, lambda) >= best);
    }
}

#[test]
fn weight_norm_is_monotone_in_lambda() {
    let mut rng = Rng::new(5);
    let x = random(&mut rng, 120 * 8);
    let y = random(&mut rng, 120 * 2);
    let norms: Vec<f64> = [1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0, 1e3]
        .iter()
        .map(|&l| ridge_fit(&x, &y, 120, 8, 2, l).unwrap().0.iter().map(|v| v * v).sum::<f64>())
        .collect();
    assert!(norms.windows(2).all(|p| p[0] >= p[1]), "{norms:?}");
}

#[test]
fn fit_is_deterministic() {
    let (x, y, _) = planted(150, 7, 2, 6);
    assert_eq!(ridge_fit(&x, &y, 150, 7, 2, 0.5).unwrap(), ridge_fit(&x, &y, 150, 7, 2, 0.5).unwrap());
}

#[test]
fn rank_deficient_system_is_reported() {
    let mut rng = Rng::new(7);
    let mut x = random(&mut rng, 50 * 3);
    for i in 0..50 {
        x[i * 3 + 2] = 2.0 * x[i * 3];
    }
    let y = random(&mut rng, 50);
    let err = ridge_fit(&x, &y, 50, 3, 1, 0.0).unwrap_err();
    assert!(matches!(err, Error::Numeric(ref m) if m.contains("condition")), "{err}");
    assert!(ridge_fit(&x, &y, 50, 3, 1, 1e-3).is_ok());
    assert!(matches!(ridge_fit(&x, &y, 50, 3, 1, -1.0), Err(Error::Config(_))));
    assert!(matches!(ridge_fit(&x, &y, 49, 3, 1, 1.0), Err(Error::Dimension(_))));
}

fn series(c: usize, n: usize, seed: u64) -> TimeSeries {
    let mut rng = Rng::new(seed);
    TimeSeries::new(random(&mut rng, c * n), 100.0, (0..c).map(|i| format!("c{i}")).collect()).unwrap()
}

#[test]
fn feature_layout() {
    let eeg = series(3, 50, 8);
    let f = ridge_features(&eeg, &[0]).unwrap();
    assert_eq!((f.n_obs, f.dim, f.first_row), (50, 3, 0));
    for t in 0..50 {
        for c in 0..3 {
            assert_eq!(f.row(t)[c], eeg.channel(c)[t]);
        }
    }
    let f = ridge_features(&eeg, &[0, 5, 10]).unwrap();
    assert_eq!((f.n_obs, f.dim, f.first_row), (40, 9, 10));
    assert_eq!(f.row(0)[3 + 1], eeg.channel(1)[10 - 5]);
    assert_eq!(f.row(7)[6 + 2], eeg.channel(2)[17 - 10]);
    assert_eq!(ridge_features(&series(30, 300, 9), &default_lag_taps()).unwrap().dim, 270);
    assert!(matches!(ridge_features(&eeg, &[50]), Err(Error::Dimension(_))));
}

#[test]
fn zero_model_predicts_its_intercept() {
    let eeg = series(2, 40, 10);
    let model = RidgeModel {
        weights: vec![0.0; 2],
        intercepts: vec![1.5],
        lambda: 1.0,
        lag_taps: vec![0],
        channels: eeg.labels().to_vec(),
        rois: vec!["r".into()],
        relative_residual: 0.0,
    };
    let (pred, start) = ridge_predict(&model, &eeg).unwrap();
    assert_eq!(start, 0);
    assert!(pred.channel(0).iter().all(|&v| v == 1.5));
    assert!(pearson_r(pred.channel(0), eeg.channel(0)).unwrap().degenerate);
}

#[test]
fn planted_linear_synthetic_mapping_is_recovered_on_held_out_data() {
    let cfg = SynthConfig {
        target: SynthTarget::Linear,
        eeg_fs: 100.0,
        fmri_fs: 100.0,
        duration_s: 200.0,
        linear_lag_s: 0.5,
        fmri_noise_sd: 0.1,
        ..Default::default()
    };
    let d = synth_generate(&cfg, &mut Rng::new(12)).unwrap().dataset;
    let cut = d.n_samples() * 4 / 5;
    let (tr_e, te_e) = (d.eeg.slice(0, cut).unwrap(), d.eeg.slice(cut, d.n_samples()).unwrap());
    let (tr_f, te_f) = (d.fmri.slice(0, cut).unwrap(), d.fmri.slice(cut, d.n_samples()).unwrap());
    let (model, search) = fit_ridge_baseline(&tr_e, &tr_f, &default_lag_taps(), &default_lambda_grid(), 5).unwrap();
    assert_eq!(search.cv_mse.len(), 7);
    assert!(model.relative_residual <= 1e-8);
    let (pred, start) = ridge_predict(&model, &te_e).unwrap();
    for roi in 0..4 {
        let r = pearson_r(pred.channel(roi), &te_f.channel(roi)[start..]).unwrap().r;
        assert!(r >= 0.95, "roi {roi}: r = {r}");
    }
}

#[test]
fn independent_noise_targets_give_small_correlations() {
    for seed in 0..20 {
        let eeg = series(4, 1200, 100 + seed);
        let fmri = series(1, 1200, 200 + seed);
        let (tr_e, te_e) = (eeg.slice(0, 1000).unwrap(), eeg.slice(1000, 1200).unwrap());
        let (tr_f, te_f) = (fmri.slice(0, 1000).unwrap(), fmri.slice(1000, 1200).unwrap());
        let (model, _) = fit_ridge_baseline(&tr_e, &tr_f, &[0, 5, 10], &default_lambda_grid(), 5).unwrap();
        let (pred, start) = ridge_predict(&model, &te_e).unwrap();
        let r = pearson_r(pred.channel(0), &te_f.channel(0)[start..]).unwrap();
        assert!(r.degenerate || r.r.abs() <= 0.2, "seed {seed}: r = {}", r.r);
    }
}

#[test]
fn checkpoint_round_trip() {
    let eeg = series(3, 400, 13);
    let fmri = series(2, 400, 14);
    let (model, _) = fit_ridge_baseline(&eeg, &fmri, &[0, 4], &[0.1, 1.0], 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ridge.nsrr");
    save_ridge(&path, &model, serde_json::json!({"note": 1})).unwrap();
    assert_eq!(&std::fs::read(&path).unwrap()[..5], RIDGE_MAGIC);
    assert_eq!(load_ridge(&path).unwrap(), model);
    let wrong = series(3, 50, 1);
    let renamed = TimeSeries::new(wrong.data().to_vec(), 100.0, vec!["x".into(), "y".into(), "z".into()]).unwrap();
    assert!(matches!(ridge_predict(&model, &renamed), Err(Error::Dimension(_))));
}
