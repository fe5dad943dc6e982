use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_neurosiren");

const TINY: &[&str] = &[
    "--set", "model.siren_hidden_width=8",
    "--set", "model.encoder_blocks=2",
    "--set", "model.channel_widths=[8, 8]",
    "--set", "train.epochs=2",
    "--set", "train.windows_per_epoch=4",
    "--set", "optim.batch_size=2",
];

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fs::read_dir(dir).unwrap().map(|e| {
        let path = e.unwrap().path();
        let bytes = fs::read(&path).unwrap();
        (path, bytes)
    }).collect()
}

fn assert_svg(path: &Path) {
    let text = fs::read_to_string(path).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(doc.root_element().tag_name().name(), "svg");
}

struct Fixture {
    _dir: tempfile::TempDir,
    raw: PathBuf,
    prepped: PathBuf,
    run: PathBuf,
}

/// 300 s of synthetic data, prepared, plus one tiny training run on it.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let raw = dir.path().join("raw");
        let prepped = dir.path().join("prepped");
        let run_dir = dir.path().join("run");
        assert!(run(&["synth", "--seed", "3", "--out", p(&raw)]).status.success());
        assert!(run(&["prep", p(&raw), "--out", p(&prepped)]).status.success());
        let mut args = vec!["train", p(&prepped), "--seed", "5", "--out", p(&run_dir)];
        args.extend_from_slice(TINY);
        let out = run(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        Fixture { _dir: dir, raw, prepped, run: run_dir }
    })
}

#[test]
fn prep_aligns_to_the_expected_length_and_records_every_step() {
    let f = fixture();
    let meta = json(&f.prepped.join("meta.json"));
    assert_eq!(meta["n_samples"], 29400);
    assert_eq!(meta["fs_hz"], 100.0);
    let manifest = json(&f.prepped.join("prep_manifest.json"));
    let steps: Vec<&str> = manifest["steps"].as_array().unwrap().iter().map(|s| s["name"].as_str().unwrap()).collect();
    assert_eq!(steps, ["bandpass", "notch", "notch", "notch", "rereference", "resample_eeg", "resample_fmri", "hrf_shift"]);
    assert_eq!(manifest["input"]["eeg_n_samples"], 300_000);
    assert_eq!(manifest["output"]["n_samples"], 29400);
    assert!(manifest["config_hash"].as_str().unwrap().len() == 64);
}

#[test]
fn prep_refuses_prepared_data_and_is_deterministic() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let again = run(&["prep", p(&f.prepped), "--out", p(&dir.path().join("x"))]);
    assert_eq!(again.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&again.stderr).contains("already prepared"));

    let before = snapshot(&f.raw);
    let second = dir.path().join("second");
    assert!(run(&["prep", p(&f.raw), "--out", p(&second)]).status.success());
    assert_eq!(snapshot(&f.raw), before, "prep touched its input");
    for name in ["eeg.f32", "fmri.f32", "meta.json", "prep_manifest.json"] {
        assert_eq!(fs::read(f.prepped.join(name)).unwrap(), fs::read(second.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn output_inside_an_input_directory_is_refused() {
    let f = fixture();
    let before = snapshot(&f.raw);
    let out = run(&["prep", p(&f.raw), "--out", p(&f.raw.join("nested"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(snapshot(&f.raw), before);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let r = run(&["synth", "--set", "model.nope=3", "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("model.nope"));
    let result = json(&out.join("result.json"));
    assert_eq!(result["status"], "error");
    assert_eq!(result["error"]["kind"], "config");

    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "seed = 1\nthis line has no equals sign\n").unwrap();
    assert_eq!(run(&["synth", "--config", p(&cfg), "--out", p(&out)]).status.code(), Some(2));
    assert_eq!(run(&["synth", "--set", "synth.duration_s=10", "--out", p(&out)]).status.code(), Some(2));
    assert_eq!(run(&["synth", "--bogus-flag"]).status.code(), Some(2));
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# short run\nsynth.duration_s = 60\nsynth.n_rois = 2\nsynth.bands_hz = [8, 20]\nseed = 4\n").unwrap();
    let a = dir.path().join("a");
    assert!(run(&["synth", "--config", p(&cfg), "--seed", "9", "--out", p(&a)]).status.success());
    let result = json(&a.join("result.json"));
    assert_eq!(result["seed"], 9);
    assert_eq!(result["details"]["rois"].as_array().unwrap().len(), 2);
    assert_eq!(result["details"]["eeg_n_samples"], 60_000);
}

#[test]
fn data_errors_exit_3() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let missing = run(&["train", p(&dir.path().join("absent")), "--out", p(&dir.path().join("o"))]);
    assert_eq!(missing.status.code(), Some(3));
    let unprepped = run(&["train", p(&f.raw), "--out", p(&dir.path().join("o2"))]);
    assert_eq!(unprepped.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&unprepped.stderr).contains("prep"));
}

#[test]
fn train_writes_checkpoints_report_and_curve() {
    let f = fixture();
    for name in ["best.nsrn", "final.nsrn", "ridge.nsrr", "timing.json", "result.json"] {
        assert!(f.run.join(name).is_file(), "{name}");
    }
    assert_svg(&f.run.join("loss_curve.svg"));
    let report = json(&f.run.join("train_report.json"));
    assert_eq!(report["epochs_run"], 2);
    assert_eq!(report["history"].as_array().unwrap().len(), 2);
    assert_eq!(report["seed"], 5);
    let hash = report["config_hash"].as_str().unwrap();
    assert_eq!(report["final_eval"]["config_hash"], hash);
    assert_eq!(json(&f.run.join("result.json"))["config_hash"], hash);
    let eval = &report["final_eval"];
    assert_eq!(eval["rois"].as_object().unwrap().len(), 4);
    assert_eq!(eval["n_test_samples"], 5880);
    assert!(eval["baseline"]["mean"].is_number());
    assert!(eval["below_baseline"].is_boolean());
}

#[test]
fn eval_scores_the_test_segment_and_plots_each_roi() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eval");
    let r = run(&["eval", p(&f.run.join("best.nsrn")), p(&f.prepped), "--out", p(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let report = json(&out.join("eval_report.json"));
    let train_report = json(&f.run.join("train_report.json"));
    assert_eq!(report, train_report["final_eval"]);
    let plots: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().path()).filter(|p| p.extension().is_some_and(|x| x == "svg")).collect();
    assert_eq!(plots.len(), 4);
    for plot in &plots {
        assert_svg(plot);
    }
}

#[test]
fn eval_and_predict_refuse_a_different_config() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let ckpt = f.run.join("best.nsrn");
    let r = run(&["eval", p(&ckpt), p(&f.prepped), "--set", "train.epochs=3", "--out", p(&dir.path().join("e"))]);
    assert_eq!(r.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&r.stderr).to_string();
    assert!(msg.contains("train.epochs") && msg.contains("model.channel_widths"), "{msg}");
    let r = run(&["predict", p(&ckpt), p(&f.prepped), "--seed", "6", "--out", p(&dir.path().join("p"))]);
    assert_eq!(r.status.code(), Some(2));

    let mut same = vec!["eval", p(&ckpt), p(&f.prepped), "--seed", "5", "--out"];
    let ok = dir.path().join("ok");
    same.push(p(&ok));
    same.extend_from_slice(TINY);
    let r = run(&same);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
}

fn eeg_only(prepped: &Path, dir: &Path, drop_channel: Option<&str>) -> PathBuf {
    let out = dir.join(if drop_channel.is_some() { "eeg_missing" } else { "eeg" });
    fs::create_dir_all(&out).unwrap();
    let mut meta = json(&prepped.join("meta.json"));
    let n = meta["n_samples"].as_u64().unwrap() as usize;
    let mut channels: Vec<String> = serde_json::from_value(meta["eeg_channels"].clone()).unwrap();
    let bytes = fs::read(prepped.join("eeg.f32")).unwrap();
    let mut keep = bytes.clone();
    if let Some(name) = drop_channel {
        let i = channels.iter().position(|c| c == name).unwrap();
        keep = bytes.chunks(4 * n).enumerate().filter(|(k, _)| *k != i).flat_map(|(_, c)| c.to_vec()).collect();
        channels.remove(i);
    }
    meta["eeg_channels"] = serde_json::json!(channels);
    meta["rois"] = serde_json::json!([]);
    fs::write(out.join("meta.json"), serde_json::to_vec(&meta).unwrap()).unwrap();
    fs::write(out.join("eeg.f32"), keep).unwrap();
    out
}

#[test]
fn predict_tiles_whole_windows_and_reports_the_remainder() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let eeg = eeg_only(&f.prepped, dir.path(), None);
    let ckpt = f.run.join("best.nsrn");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let r = run(&["predict", p(&ckpt), p(&eeg), "--out", p(out)]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    let result = json(&a.join("result.json"));
    let d = &result["details"];
    assert_eq!(d["n_input_samples"], 29400);
    assert_eq!(d["n_windows"], 14);
    assert_eq!(d["n_predicted_samples"], 28672);
    assert_eq!(d["n_dropped_samples"], 728);
    let csv = fs::read_to_string(a.join("predictions.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "pallidum,caudate,putamen,accumbens");
    assert_eq!(lines.count(), 28672);
    assert_eq!(csv, fs::read_to_string(b.join("predictions.csv")).unwrap());
}

#[test]
fn predict_names_missing_channels() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let eeg = eeg_only(&f.prepped, dir.path(), Some("eeg07"));
    let r = run(&["predict", p(&f.run.join("best.nsrn")), p(&eeg), "--out", p(&dir.path().join("o"))]);
    assert_eq!(r.status.code(), Some(3));
    let msg = String::from_utf8_lossy(&r.stderr);
    assert!(msg.contains("missing: eeg07"), "{msg}");
}

#[test]
fn diverging_training_exits_4_and_keeps_the_last_good_checkpoint() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t");
    let mut args = vec!["train", p(&f.prepped), "--out", p(&out)];
    args.extend_from_slice(TINY);
    args.extend_from_slice(&["--set", "optim.lr=1e30", "--set", "train.epochs=20"]);
    let r = run(&args);
    assert_eq!(r.status.code(), Some(4));
    assert!(out.join("final.nsrn").is_file());
    let report = json(&out.join("train_report.json"));
    assert!(report["failure"].as_str().unwrap().contains("non-finite"));
    assert_eq!(json(&out.join("result.json"))["error"]["kind"], "numeric");
    let eval = run(&["eval", p(&out.join("final.nsrn")), p(&f.prepped), "--out", p(&dir.path().join("e"))]);
    assert!(eval.status.success(), "{}", String::from_utf8_lossy(&eval.stderr));
}

#[test]
fn gradcheck_passes_and_names_a_corrupted_op() {
    let dir = tempfile::tempdir().unwrap();
    let ok = dir.path().join("ok");
    let r = run(&["gradcheck", "--out", p(&ok)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let report = json(&ok.join("gradcheck_report.json"));
    assert_eq!(report["pass"], true);
    assert_eq!(report["ops"].as_array().unwrap().len(), 13);
    assert!(report["runtime_s"].as_f64().unwrap() < 60.0);

    let bad = dir.path().join("bad");
    let r = run(&["gradcheck", "--set", "gradcheck.corrupt_op=gelu", "--out", p(&bad)]);
    assert_eq!(r.status.code(), Some(4));
    let result = json(&bad.join("result.json"));
    assert!(result["error"]["message"].as_str().unwrap().contains("gelu"));
    let report = json(&bad.join("gradcheck_report.json"));
    let failing: Vec<&str> = report["ops"].as_array().unwrap().iter().filter(|o| o["pass"] == false).map(|o| o["op"].as_str().unwrap()).collect();
    assert_eq!(failing, ["gelu"]);

    let unknown = run(&["gradcheck", "--set", "gradcheck.corrupt_op=tanh", "--out", p(&bad)]);
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn fresh_checkpoints_score_near_zero() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let mut means = Vec::new();
    for seed in 0..10 {
        let seed = seed.to_string();
        let out = dir.path().join(format!("s{seed}"));
        let r = run(&["train", p(&f.prepped), "--seed", &seed, "--set", "train.epochs=0", "--out", p(&out)]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
        let eval = &json(&out.join("train_report.json"))["final_eval"];
        assert!(eval["below_baseline"].is_boolean());
        means.push(eval["mean"].as_f64().unwrap().abs());
    }
    means.sort_by(f64::total_cmp);
    assert!(means[5] <= 0.3, "{means:?}");
}
