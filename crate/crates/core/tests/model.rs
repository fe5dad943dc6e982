use neurosiren::diffcore::{Mode, Rng, Tape, Tensor};
use neurosiren::model::*;
use proptest::prelude::*;

fn input(c: usize, l: usize, seed: u64) -> Tensor<f32> {
    let mut rng = Rng::new(seed);
    Tensor::from_f64(&[c, l], &(0..c * l).map(|_| rng.normal()).collect::<Vec<_>>()).unwrap()
}

fn tiny() -> ModelConfig {
    ModelConfig {
        n_eeg_channels: 30,
        n_rois: 2,
        siren_hidden_width: 6,
        siren_hidden_layers: 1,
        encoder_blocks: 2,
        channel_widths: vec![5, 7],
        kernel_size: 3,
        window_len_samples: 64,
        ..Default::default()
    }
}

#[test]
fn default_shapes() {
    let cfg = ModelConfig::default();
    let p = ModelParams::<f32>::init(&cfg, &mut Rng::new(1)).unwrap();
    let x = input(30, 2048, 2);
    let mut tape = Tape::new();
    let vars = p.register_frozen(&mut tape);
    let xv = tape.constant(x.clone());
    let mut rng = Rng::new(3);
    let feats = siren_forward(&mut tape, &vars, &cfg, xv).unwrap();
    assert_eq!(tape.value(feats).shape(), &[64, 2048]);
    let latent = encoder_forward(&mut tape, &vars, &cfg, feats, Mode::Eval, &mut rng).unwrap();
    assert_eq!(tape.value(latent).shape(), &[256, 128]);
    let out = decoder_forward(&mut tape, &vars, &cfg, latent, Mode::Eval, &mut rng).unwrap();
    assert_eq!(tape.value(out).shape(), &[4, 2048]);
    assert!(p.n_scalars() < 2_000_000);
}

#[test]
fn single_block_example() {
    let cfg = ModelConfig {
        n_eeg_channels: 3,
        siren_hidden_width: 5,
        encoder_blocks: 1,
        channel_widths: vec![8],
        window_len_samples: 4,
        ..Default::default()
    };
    let p = ModelParams::<f64>::init(&cfg, &mut Rng::new(4)).unwrap();
    let mut tape = Tape::new();
    let vars = p.register_frozen(&mut tape);
    let x = tape.constant(Tensor::zeros(&[5, 4]));
    let latent = encoder_forward(&mut tape, &vars, &cfg, x, Mode::Eval, &mut Rng::new(0)).unwrap();
    assert_eq!(tape.value(latent).shape(), &[8, 2]);
}

fn config_strategy() -> impl Strategy<Value = ModelConfig> {
    (1usize..=4, 1usize..=6, 1usize..=3, 0usize..=2, prop::collection::vec(1usize..=9, 4), 0usize..=2, 1usize..=3)
        .prop_map(|(n, c, r, k, widths, kern, mult)| ModelConfig {
            n_eeg_channels: c,
            n_rois: r,
            siren_hidden_width: 4,
            siren_hidden_layers: k,
            encoder_blocks: n,
            channel_widths: widths[..n].to_vec(),
            kernel_size: 2 * kern + 1,
            window_len_samples: mult << n,
            ..Default::default()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn shape_law(cfg in config_strategy(), seed in any::<u64>()) {
        let p = ModelParams::<f32>::init(&cfg, &mut Rng::new(seed)).unwrap();
        let x = input(cfg.n_eeg_channels, cfg.window_len_samples, seed);
        let mut tape = Tape::new();
        let vars = p.register_frozen(&mut tape);
        let xv = tape.constant(x);
        let mut rng = Rng::new(seed);
        let f = siren_forward(&mut tape, &vars, &cfg, xv).unwrap();
        let z = encoder_forward(&mut tape, &vars, &cfg, f, Mode::Train, &mut rng).unwrap();
        prop_assert_eq!(tape.value(z).shape(), &[cfg.channel_widths[cfg.encoder_blocks - 1], cfg.latent_len()]);
        let y = decoder_forward(&mut tape, &vars, &cfg, z, Mode::Train, &mut rng).unwrap();
        prop_assert_eq!(tape.value(y).shape(), &[cfg.n_rois, cfg.window_len_samples]);
    }
}

#[test]
fn indivisible_length_is_rejected() {
    let cfg = ModelConfig::default();
    let p = ModelParams::<f32>::init(&cfg, &mut Rng::new(1)).unwrap();
    assert!(model_forward(&p, &input(30, 2040, 1), Mode::Eval, &mut Rng::new(0)).is_err());
    assert!(model_forward(&p, &input(29, 2048, 1), Mode::Eval, &mut Rng::new(0)).is_err());
}

#[test]
fn siren_layer_structure_and_range() {
    let cfg = ModelConfig { siren_hidden_layers: 2, ..tiny() };
    let layout = param_layout(&cfg);
    let siren: Vec<_> = layout.iter().filter(|s| s.name.starts_with("siren.")).map(|s| s.name.as_str()).collect();
    assert_eq!(
        siren,
        [
            "siren.sine0.weight", "siren.sine0.bias", "siren.sine1.weight", "siren.sine1.bias",
            "siren.sine2.weight", "siren.sine2.bias", "siren.proj.weight", "siren.proj.bias"
        ]
    );
    let p = ModelParams::<f64>::init(&cfg, &mut Rng::new(5)).unwrap();
    let mut tape = Tape::new();
    let vars = p.register_frozen(&mut tape);
    let x = tape.constant(input(30, 64, 6).cast());
    let w = vars.siren()[0];
    let b = vars.siren()[1];
    let z = tape.affine(x, w, b).unwrap();
    let s = tape.sine(z, cfg.omega0).unwrap();
    assert!(tape.value(s).data().iter().all(|v| (-1.0..=1.0).contains(v)));
}

#[test]
fn siren_init_bounds() {
    let cfg = ModelConfig::default();
    let t: Vec<Tensor<f64>> = siren_init(&cfg, &mut Rng::new(7));
    let max_abs = |t: &Tensor<f64>| t.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(max_abs(&t[0]) <= 1.0 / 30.0);
    assert!(max_abs(&t[0]) > 0.9 / 30.0);
    let hidden = (6.0f64 / 64.0).sqrt() / 30.0;
    assert!((hidden - 0.010_206_207_261_596_574).abs() < 1e-15);
    for w in [&t[2], &t[4]] {
        assert!(max_abs(w) <= hidden);
        assert!(max_abs(w) > 0.9 * hidden);
    }
    assert!(t[1].data().iter().all(|&v| v == 0.0));
    let again: Vec<Tensor<f64>> = siren_init(&cfg, &mut Rng::new(7));
    assert_eq!(t, again);
}

#[test]
fn eval_mode_is_deterministic_and_train_mode_uses_the_generator() {
    let cfg = tiny();
    let p = ModelParams::<f32>::init(&cfg, &mut Rng::new(8)).unwrap();
    let x = input(30, 64, 9);
    let a = model_forward(&p, &x, Mode::Eval, &mut Rng::new(1)).unwrap();
    let b = model_forward(&p, &x, Mode::Eval, &mut Rng::new(2)).unwrap();
    assert_eq!(a, b);
    let c = model_forward(&p, &x, Mode::Train, &mut Rng::new(1)).unwrap();
    let d = model_forward(&p, &x, Mode::Train, &mut Rng::new(1)).unwrap();
    let e = model_forward(&p, &x, Mode::Train, &mut Rng::new(2)).unwrap();
    assert_eq!(c, d);
    assert_ne!(c, e);
}

#[test]
fn zero_head_gives_its_bias() {
    let cfg = tiny();
    let mut p = ModelParams::<f32>::init(&cfg, &mut Rng::new(10)).unwrap();
    let n = p.tensors().len();
    for v in p.tensors_mut()[n - 2].data_mut() {
        *v = 0.0;
    }
    p.tensors_mut()[n - 1].data_mut().copy_from_slice(&[0.25, -1.5]);
    let y = model_forward(&p, &input(30, 64, 11), Mode::Eval, &mut Rng::new(0)).unwrap();
    assert!(y.row(0).iter().all(|&v| v == 0.25));
    assert!(y.row(1).iter().all(|&v| v == -1.5));
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let cfg = tiny();
    let p = ModelParams::<f32>::init(&cfg, &mut Rng::new(12)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.nsrn");
    let ckpt = ModelCheckpoint {
        params: p.clone(),
        meta: serde_json::json!({"seed": 12}),
        aux: vec![("eeg_mean".into(), Tensor::from_f64(&[3], &[1.0, 2.0, 3.0]).unwrap())],
    };
    save_checkpoint(&path, &ckpt).unwrap();
    let back: ModelCheckpoint<f32> = load_checkpoint(&path).unwrap();
    assert_eq!(back.params, p);
    assert_eq!(back.aux, ckpt.aux);
    assert_eq!(back.meta["seed"], 12);
    let x = input(30, 64, 13);
    let a = model_forward(&p, &x, Mode::Eval, &mut Rng::new(0)).unwrap();
    let b = model_forward(&back.params, &x, Mode::Eval, &mut Rng::new(0)).unwrap();
    assert_eq!(a.data(), b.data());
    assert_eq!(&std::fs::read(&path).unwrap()[..5], MODEL_MAGIC);
}

#[test]
fn full_model_gradient_matches_finite_differences() {
    let cfg = gradcheck_config();
    let n = ModelParams::<f64>::init(&cfg, &mut Rng::new(0)).unwrap().n_scalars();
    for seed in 0..5 {
        let report = model_grad_check(&cfg, seed, 0.1, 1e-6, None).unwrap();
        assert!(report.max_rel_error <= 1e-4, "seed {seed}: {report:?}");
        assert_eq!(report.n_coords, n);
    }
}

#[test]
fn corrupted_layer_norm_breaks_the_model_check() {
    let report = model_grad_check(&gradcheck_config(), 1, 0.1, 1e-6, Some(neurosiren::diffcore::OpKind::LayerNorm)).unwrap();
    assert!(report.max_rel_error > 1e-4, "{report:?}");
}
