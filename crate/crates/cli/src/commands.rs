use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{error, info, warn};
use neurosiren::baselines::{fit_ridge_baseline, load_ridge, ridge_predict, save_ridge, RidgeModel};
use neurosiren::data::{load_dataset, load_eeg, save_dataset, split_train_test, synth_generate, tile_starts, Dataset};
use neurosiren::diffcore::{primitive_suite, Mode, OpKind, Rng, Tensor};
use neurosiren::model::{
    gradcheck_config, load_checkpoint, model_forward, model_grad_check, param_layout, save_checkpoint,
    ModelCheckpoint, ModelParams,
};
use neurosiren::objective::{evaluate, score, EvalReport};
use neurosiren::signal_prep::{prepare, zscore_apply, TimeSeries, ZScoreStats};
use neurosiren::training::{train, EpochStats, Normalization};
use serde_json::{json, Value};

use crate::plot::{line_chart, Series};
use crate::{write_json, Cli, CliError, Command, ResolvedConfig, RunConfig};

pub const PREP_MANIFEST: &str = "prep_manifest.json";
pub const BEST_CHECKPOINT: &str = "best.nsrn";
pub const FINAL_CHECKPOINT: &str = "final.nsrn";
pub const RIDGE_FILE: &str = "ridge.nsrr";
pub const TRAIN_REPORT: &str = "train_report.json";
pub const EVAL_REPORT: &str = "eval_report.json";
pub const PREDICTIONS: &str = "predictions.csv";

const TRUTH_COLOR: &str = "#222222";
const PRED_COLOR: &str = "#d62728";

pub fn dispatch(cli: &Cli, resolved: ResolvedConfig) -> Result<Value, CliError> {
    let out = cli.out.as_path();
    match &cli.command {
        Command::Prep { input } => prep(input, out, &resolved.config),
        Command::Synth => synth(out, &resolved.config),
        Command::Train { data } => train_cmd(data, out, &resolved.config),
        Command::Eval { checkpoint, data } => eval_cmd(checkpoint, data, out, &resolved),
        Command::Predict { checkpoint, eeg } => predict_cmd(checkpoint, eeg, out, &resolved),
        Command::Gradcheck => gradcheck(out, &resolved.config),
    }
}

fn prep(input: &Path, out: &Path, cfg: &RunConfig) -> Result<Value, CliError> {
    if input.join(PREP_MANIFEST).exists() {
        return Err(CliError::Data(format!(
            "{} is already prepared ({PREP_MANIFEST} present); prep runs once, on native-rate recordings",
            input.display()
        )));
    }
    let raw = load_dataset(input)?;
    let o = prepare(&raw.eeg, &raw.fmri, &cfg.prep)?;
    let d = Dataset {
        eeg: o.eeg,
        fmri: o.fmri,
        subject_id: raw.subject_id.clone(),
        provenance: raw.provenance,
    };
    save_dataset(&d, out, cfg.output.encoding)?;
    let hash = cfg.hash();
    let manifest = json!({
        "config_hash": hash,
        "prep": cfg.prep,
        "input": {
            "dir": input.display().to_string(),
            "eeg_fs_hz": raw.eeg.fs(),
            "eeg_n_samples": raw.eeg.n_samples(),
            "fmri_fs_hz": raw.fmri.fs(),
            "fmri_n_samples": raw.fmri.n_samples(),
        },
        "output": { "fs_hz": d.eeg.fs(), "n_samples": d.n_samples() },
        "steps": o.steps,
    });
    write_json(&out.join(PREP_MANIFEST), &manifest)?;
    info!("prepared {} samples at {} Hz", d.n_samples(), d.eeg.fs());
    Ok(json!({
        "config_hash": hash,
        "fs_hz": d.eeg.fs(),
        "n_samples": d.n_samples(),
        "steps": o.steps.iter().map(|s| s.name.clone()).collect::<Vec<_>>(),
    }))
}

fn synth(out: &Path, cfg: &RunConfig) -> Result<Value, CliError> {
    let s = synth_generate(&cfg.synth, &mut Rng::new(cfg.seed))?;
    let d = &s.dataset;
    save_dataset(d, out, cfg.output.encoding)?;
    info!(
        "wrote {} s of synthetic EEG ({} Hz) and fMRI ({} Hz)",
        cfg.synth.duration_s,
        d.eeg.fs(),
        d.fmri.fs()
    );
    Ok(json!({
        "config_hash": cfg.hash(),
        "eeg_fs_hz": d.eeg.fs(),
        "eeg_n_samples": d.eeg.n_samples(),
        "fmri_fs_hz": d.fmri.fs(),
        "fmri_n_samples": d.fmri.n_samples(),
        "eeg_channels": d.eeg.labels(),
        "rois": d.fmri.labels(),
    }))
}

fn norm_aux(norm: &Normalization) -> Vec<(String, Tensor<f64>)> {
    let t = |v: &[f64]| Tensor::new(vec![v.len()], v.to_vec()).expect("1-d tensor");
    vec![
        ("eeg_mean".into(), t(&norm.eeg.mean)),
        ("eeg_sd".into(), t(&norm.eeg.sd)),
        ("fmri_mean".into(), t(&norm.fmri.mean)),
        ("fmri_sd".into(), t(&norm.fmri.sd)),
    ]
}

fn norm_from(ckpt: &ModelCheckpoint<f32>) -> Result<Normalization, CliError> {
    let get = |name: &str| {
        ckpt.aux
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.data().to_vec())
            .ok_or_else(|| CliError::Data(format!("checkpoint lacks normalization statistic {name}")))
    };
    Ok(Normalization {
        eeg: ZScoreStats { mean: get("eeg_mean")?, sd: get("eeg_sd")? },
        fmri: ZScoreStats { mean: get("fmri_mean")?, sd: get("fmri_sd")? },
    })
}

fn history_json(history: &[EpochStats]) -> Value {
    Value::Array(
        history
            .iter()
            .map(|e| json!({ "epoch": e.epoch, "mse": e.mse, "corr": e.corr, "composite": e.composite }))
            .collect(),
    )
}

fn loss_curve(history: &[EpochStats]) -> String {
    let x: Vec<f64> = history.iter().map(|e| e.epoch as f64).collect();
    let comp: Vec<f64> = history.iter().map(|e| e.composite).collect();
    let mse: Vec<f64> = history.iter().map(|e| e.mse).collect();
    let corr: Vec<f64> = history.iter().map(|e| e.corr).collect();
    line_chart(
        "Training loss",
        "epoch",
        "loss",
        &[
            Series { label: "composite", color: "#1f77b4", x: &x, y: &comp },
            Series { label: "mse", color: "#ff7f0e", x: &x, y: &mse },
            Series { label: "corr", color: "#2ca02c", x: &x, y: &corr },
        ],
    )
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

/// Model scores on a normalized test segment, with the ridge baseline when
/// one is available.
fn score_with_baseline(
    params: &ModelParams<f32>,
    test: &Dataset,
    ridge: Option<&RidgeModel>,
    hash: &str,
) -> Result<(EvalReport, TimeSeries), CliError> {
    let (mut report, pred) = evaluate(params, test)?;
    report.config_hash = hash.to_string();
    if let Some(model) = ridge {
        let (rp, first) = ridge_predict(model, &test.eeg)?;
        let truth = test.fmri.slice(first, test.n_samples())?;
        report.baseline = Some(score(&truth, &rp)?);
    }
    Ok((report, pred))
}

fn train_cmd(dir: &Path, out: &Path, cfg: &RunConfig) -> Result<Value, CliError> {
    let data = load_dataset(dir)?;
    if !data.is_aligned() {
        return Err(CliError::Data(format!(
            "{} holds EEG and fMRI on different time grids; run `neurosiren prep` first",
            dir.display()
        )));
    }
    if data.eeg.fs() != cfg.prep.target_fs {
        warn!(
            "dataset is sampled at {} Hz but prep.target_fs is {} Hz; windows span {} s",
            data.eeg.fs(),
            cfg.prep.target_fs,
            cfg.model.window_len_samples as f64 / data.eeg.fs()
        );
    }
    let hash = cfg.hash();
    let (tr, te) = split_train_test(&data, cfg.split.train_parts, cfg.split.test_parts)?;
    let w = cfg.model.window_len_samples;
    for (name, part) in [("train", &tr), ("test", &te)] {
        if part.n_samples() < w {
            return Err(CliError::Data(format!(
                "{name} segment holds {} samples, fewer than one {w}-sample window",
                part.n_samples()
            )));
        }
    }
    let norm = Normalization::fit(&tr);
    let (tr, te) = (norm.apply(&tr)?, norm.apply(&te)?);

    let t0 = Instant::now();
    let mut epoch_end_s = Vec::with_capacity(cfg.train.epochs);
    let total = cfg.train.epochs;
    let outcome = train(&tr, &cfg.model, &cfg.optim, &cfg.train, cfg.seed, |e| {
        let t = t0.elapsed().as_secs_f64();
        epoch_end_s.push(t);
        info!(
            "epoch {}/{total} mse {:.6} corr {:.6} composite {:.6} elapsed {t:.1}s",
            e.epoch, e.mse, e.corr, e.composite
        );
    })?;
    let wall_time_s = t0.elapsed().as_secs_f64();

    let meta = |kind: &str, epoch: usize| {
        json!({
            "kind": kind,
            "epoch": epoch,
            "config_hash": hash,
            "seed": cfg.seed,
            "run_config": cfg.to_json(),
            "eeg_channels": data.eeg.labels(),
            "rois": data.fmri.labels(),
        })
    };
    let best_path = out.join(BEST_CHECKPOINT);
    let final_path = out.join(FINAL_CHECKPOINT);
    save_checkpoint(
        &best_path,
        &ModelCheckpoint { params: outcome.best.clone(), meta: meta("best", outcome.best_epoch), aux: norm_aux(&norm) },
    )?;
    save_checkpoint(
        &final_path,
        &ModelCheckpoint {
            params: outcome.params.clone(),
            meta: meta("final", outcome.history.len()),
            aux: norm_aux(&norm),
        },
    )?;
    write_text(&out.join("loss_curve.svg"), &loss_curve(&outcome.history))?;
    write_json(&out.join("timing.json"), &json!({ "wall_time_s": wall_time_s, "epoch_end_s": epoch_end_s }))?;
    let mut report = json!({
        "config_hash": hash,
        "seed": cfg.seed,
        "epochs_configured": total,
        "epochs_run": outcome.history.len(),
        "history": history_json(&outcome.history),
        "best_epoch": outcome.best_epoch,
        "final_eval": Value::Null,
        "failure": Value::Null,
    });

    if let Some(failure) = &outcome.failure {
        report["failure"] = json!(failure.to_string());
        write_json(&out.join(TRAIN_REPORT), &report)?;
        return Err(CliError::Numeric(format!(
            "{failure}; the last good parameters are kept in {}",
            final_path.display()
        )));
    }

    let (ridge, search) =
        fit_ridge_baseline(&tr.eeg, &tr.fmri, &cfg.ridge.lag_taps, &cfg.ridge.lambdas, cfg.ridge.folds)?;
    save_ridge(&out.join(RIDGE_FILE), &ridge, json!({ "config_hash": hash, "lambda_search": search }))?;
    let (eval, _) = score_with_baseline(&outcome.best, &te, Some(&ridge), &hash)?;
    report["final_eval"] = eval.to_json();
    write_json(&out.join(TRAIN_REPORT), &report)?;
    info!(
        "best epoch {} of {}: test mean r {:.4} (ridge {:.4})",
        outcome.best_epoch,
        outcome.history.len(),
        eval.mean,
        eval.baseline_mean().unwrap_or(f64::NAN)
    );
    Ok(json!({
        "config_hash": hash,
        "seed": cfg.seed,
        "epochs_run": outcome.history.len(),
        "best_epoch": outcome.best_epoch,
        "test_mean_r": eval.mean,
        "ridge_mean_r": eval.baseline_mean(),
    }))
}

/// The configuration a checkpoint was trained with. A configuration given
/// on the command line must hash identically.
fn checkpoint_config(ckpt: &ModelCheckpoint<f32>, resolved: &ResolvedConfig) -> Result<RunConfig, CliError> {
    let stored: RunConfig = ckpt
        .meta
        .get("run_config")
        .cloned()
        .map(serde_json::from_value)
        .transpose()
        .map_err(|e| CliError::Data(format!("checkpoint run configuration is unreadable: {e}")))?
        .ok_or_else(|| CliError::Data("checkpoint carries no run configuration".into()))?;
    let stored_hash = ckpt.meta.get("config_hash").and_then(Value::as_str).unwrap_or_default();
    if stored.hash() != stored_hash || stored.model != *ckpt.params.config() {
        return Err(CliError::Data(
            "checkpoint is internally inconsistent: its configuration does not match its recorded hash or weights".into(),
        ));
    }
    let requested = resolved.config.hash();
    if resolved.explicit && requested != stored_hash {
        let keys = RunConfig::diff_keys(&resolved.config.to_json(), &stored.to_json());
        return Err(CliError::Config(format!(
            "checkpoint was trained under config {:.12} but this invocation resolves to {:.12} (differs in: {}); \
             omit --config/--set/--seed to reuse the checkpoint's own configuration",
            stored_hash,
            requested,
            keys.join(", ")
        )));
    }
    Ok(stored)
}

fn labels_from(meta: &Value, key: &str) -> Result<Vec<String>, CliError> {
    meta.get(key)
        .cloned()
        .map(serde_json::from_value)
        .transpose()
        .map_err(|e| CliError::Data(format!("checkpoint {key}: {e}")))?
        .ok_or_else(|| CliError::Data(format!("checkpoint lacks {key}")))
}

/// Reorders `ts` to `expected`, or explains which names are missing or
/// unexpected.
fn match_labels(ts: &TimeSeries, expected: &[String], what: &str) -> Result<TimeSeries, CliError> {
    let found = ts.labels();
    if found == expected {
        return Ok(ts.clone());
    }
    let missing: Vec<&str> = expected.iter().filter(|e| !found.contains(e)).map(String::as_str).collect();
    let extra: Vec<&str> = found.iter().filter(|f| !expected.contains(f)).map(String::as_str).collect();
    if !missing.is_empty() || !extra.is_empty() || found.len() != expected.len() {
        let mut msg = format!("{what} do not match the checkpoint");
        if !missing.is_empty() {
            let _ = write!(msg, "; missing: {}", missing.join(", "));
        }
        if !extra.is_empty() {
            let _ = write!(msg, "; extra: {}", extra.join(", "));
        }
        return Err(CliError::Data(msg));
    }
    let channels: Vec<Vec<f64>> = expected
        .iter()
        .map(|name| {
            let i = found.iter().position(|f| f == name).expect("checked above");
            ts.channel(i).to_vec()
        })
        .collect();
    Ok(TimeSeries::from_channels(channels, ts.fs(), expected.to_vec())?)
}

fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn eval_cmd(checkpoint: &Path, dir: &Path, out: &Path, resolved: &ResolvedConfig) -> Result<Value, CliError> {
    let ckpt: ModelCheckpoint<f32> = load_checkpoint(checkpoint)?;
    let cfg = checkpoint_config(&ckpt, resolved)?;
    let hash = cfg.hash();
    let data = load_dataset(dir)?;
    if !data.is_aligned() {
        return Err(CliError::Data(format!(
            "{} holds EEG and fMRI on different time grids; run `neurosiren prep` first",
            dir.display()
        )));
    }
    let data = Dataset {
        eeg: match_labels(&data.eeg, &labels_from(&ckpt.meta, "eeg_channels")?, "EEG channels")?,
        fmri: match_labels(&data.fmri, &labels_from(&ckpt.meta, "rois")?, "ROIs")?,
        ..data
    };
    let (_, te) = split_train_test(&data, cfg.split.train_parts, cfg.split.test_parts)?;
    let te = norm_from(&ckpt)?.apply(&te)?;

    let ridge_path = checkpoint.parent().map(|p| p.join(RIDGE_FILE)).unwrap_or_else(|| PathBuf::from(RIDGE_FILE));
    let ridge = if ridge_path.is_file() {
        Some(load_ridge(&ridge_path)?)
    } else {
        warn!("no ridge baseline next to the checkpoint; reporting the model alone");
        None
    };
    let (report, pred) = score_with_baseline(&ckpt.params, &te, ridge.as_ref(), &hash)?;
    write_json(&out.join(EVAL_REPORT), &report.to_json())?;

    let t: Vec<f64> = (0..te.n_samples()).map(|i| i as f64 / te.fmri.fs()).collect();
    let mut plots = Vec::new();
    for (k, roi) in report.rois.iter().enumerate() {
        let svg = line_chart(
            &format!("{}  r = {:.3}", roi.name, roi.r),
            "time in test segment (s)",
            "z-scored signal",
            &[
                Series { label: "real", color: TRUTH_COLOR, x: &t, y: te.fmri.channel(k) },
                Series { label: "predicted", color: PRED_COLOR, x: &t, y: pred.channel(k) },
            ],
        );
        let name = format!("roi_{k:02}_{}.svg", file_stem(&roi.name));
        write_text(&out.join(&name), &svg)?;
        plots.push(name);
    }
    for roi in &report.rois {
        info!("{:<16} r = {:.4}{}", roi.name, roi.r, if roi.degenerate { " (degenerate)" } else { "" });
    }
    info!("mean r = {:.4} ± {:.4}", report.mean, report.sd);
    if report.below_baseline() == Some(true) {
        warn!("model mean r is below the ridge baseline ({:.4})", report.baseline_mean().unwrap_or(f64::NAN));
    }
    Ok(json!({
        "config_hash": hash,
        "seed": cfg.seed,
        "mean_r": report.mean,
        "sd_r": report.sd,
        "below_baseline": report.below_baseline(),
        "plots": plots,
    }))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn predict_cmd(checkpoint: &Path, dir: &Path, out: &Path, resolved: &ResolvedConfig) -> Result<Value, CliError> {
    let ckpt: ModelCheckpoint<f32> = load_checkpoint(checkpoint)?;
    let cfg = checkpoint_config(&ckpt, resolved)?;
    let hash = cfg.hash();
    let eeg = match_labels(&load_eeg(dir)?, &labels_from(&ckpt.meta, "eeg_channels")?, "EEG channels")?;
    let rois = labels_from(&ckpt.meta, "rois")?;
    if eeg.fs() != cfg.prep.target_fs {
        return Err(CliError::Data(format!(
            "EEG is sampled at {} Hz but the model was trained at {} Hz",
            eeg.fs(),
            cfg.prep.target_fs
        )));
    }
    let norm = norm_from(&ckpt)?;
    let x = zscore_apply(&eeg, &norm.eeg)?;
    let w = cfg.model.window_len_samples;
    let n = x.n_samples();
    let starts = tile_starts(n, w, false);
    if starts.is_empty() {
        return Err(CliError::Data(format!("{n} EEG samples do not fill one {w}-sample window")));
    }
    let r = rois.len();
    let mut pred = vec![Vec::with_capacity(starts.len() * w); r];
    let mut rng = Rng::new(0);
    for &start in &starts {
        let data: Vec<f32> = x.channels().flat_map(|c| c[start..start + w].iter().map(|&v| v as f32)).collect();
        let y = model_forward(&ckpt.params, &Tensor::new(vec![x.n_channels(), w], data)?, Mode::Eval, &mut rng)?;
        for (k, p) in pred.iter_mut().enumerate() {
            p.extend(y.row(k).iter().map(|&v| v as f64 * norm.fmri.sd[k] + norm.fmri.mean[k]));
        }
    }
    let n_pred = starts.len() * w;
    let dropped = n - n_pred;
    if dropped > 0 {
        warn!("dropped the trailing {dropped} samples that do not fill a {w}-sample window");
    }
    let mut text = rois.iter().map(|s| csv_field(s)).collect::<Vec<_>>().join(",");
    text.push('\n');
    for t in 0..n_pred {
        for (k, p) in pred.iter().enumerate() {
            if k > 0 {
                text.push(',');
            }
            let _ = write!(text, "{}", p[t]);
        }
        text.push('\n');
    }
    write_text(&out.join(PREDICTIONS), &text)?;
    info!("predicted {n_pred} samples in {} windows", starts.len());
    Ok(json!({
        "config_hash": hash,
        "seed": cfg.seed,
        "rois": rois,
        "fs_hz": eeg.fs(),
        "window_len": w,
        "n_input_samples": n,
        "n_windows": starts.len(),
        "n_predicted_samples": n_pred,
        "n_dropped_samples": dropped,
        "file": PREDICTIONS,
    }))
}

fn gradcheck(out: &Path, cfg: &RunConfig) -> Result<Value, CliError> {
    let gc = &cfg.gradcheck;
    if gc.seeds == 0 || !(gc.eps > 0.0) || !(gc.tolerance > 0.0) {
        return Err(CliError::Config("gradcheck needs seeds ≥ 1 and positive eps and tolerance".into()));
    }
    let corrupt = match gc.corrupt_op.as_deref() {
        None => None,
        Some(name) => Some(OpKind::from_name(name).ok_or_else(|| {
            let known: Vec<&str> = OpKind::ALL.iter().map(|k| k.name()).collect();
            CliError::Config(format!("gradcheck.corrupt_op = {name}: unknown primitive (one of {})", known.join(", ")))
        })?),
    };
    if let Some(op) = corrupt {
        warn!("backward pass of {op} is deliberately corrupted");
    }
    let t0 = Instant::now();
    let seeds: Vec<u64> = (0..gc.seeds).map(|i| cfg.seed.wrapping_add(i)).collect();
    let checks = primitive_suite(&seeds, gc.eps, corrupt)?;
    let mut ops = Vec::new();
    let mut failed = Vec::new();
    for op in OpKind::ALL {
        let worst = checks
            .iter()
            .filter(|c| c.op == op)
            .max_by(|a, b| a.report.max_rel_error.total_cmp(&b.report.max_rel_error))
            .expect("every op is checked");
        let pass = worst.report.max_rel_error <= gc.tolerance;
        if !pass {
            error!("{op}: max relative error {:.3e} (seed {})", worst.report.max_rel_error, worst.seed);
            failed.push(op.name().to_string());
        }
        ops.push(json!({
            "op": op.name(),
            "max_rel_error": worst.report.max_rel_error,
            "worst_seed": worst.seed,
            "pass": pass,
        }));
    }

    let mcfg = gradcheck_config();
    let layout = param_layout(&mcfg);
    let mut model = Vec::new();
    for &seed in &seeds {
        let rep = model_grad_check(&mcfg, seed, cfg.optim.alpha_corr, gc.eps, corrupt)?;
        let param = &layout[rep.worst_input].name;
        let pass = rep.max_rel_error <= gc.tolerance;
        if !pass {
            error!(
                "full model, seed {seed}: max relative error {:.3e} at {param}[{}]",
                rep.max_rel_error, rep.worst_index
            );
            failed.push(format!("model:{param}"));
        }
        model.push(json!({
            "seed": seed,
            "max_rel_error": rep.max_rel_error,
            "worst_param": param,
            "worst_index": rep.worst_index,
            "n_coords": rep.n_coords,
            "pass": pass,
        }));
    }
    let runtime_s = t0.elapsed().as_secs_f64();
    failed.dedup();
    let report = json!({
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "eps": gc.eps,
        "tolerance": gc.tolerance,
        "seeds": seeds,
        "corrupt_op": gc.corrupt_op,
        "ops": ops,
        "model": { "config": mcfg, "checks": model },
        "failed": failed,
        "pass": failed.is_empty(),
        "runtime_s": runtime_s,
    });
    write_json(&out.join("gradcheck_report.json"), &report)?;
    if !failed.is_empty() {
        return Err(CliError::Numeric(format!("gradient check failed for: {}", failed.join(", "))));
    }
    info!("all gradients within {:.0e} ({runtime_s:.1}s)", gc.tolerance);
    Ok(json!({ "config_hash": cfg.hash(), "pass": true, "runtime_s": runtime_s }))
}
