use std::fmt::Write as _;
use std::path::Path;

use neurosiren::baselines::{default_lag_taps, default_lambda_grid};
use neurosiren::data::{Encoding, SynthConfig};
use neurosiren::model::ModelConfig;
use neurosiren::objective::OptimizerConfig;
use neurosiren::signal_prep::PrepConfig;
use neurosiren::training::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Contiguous train/test split ratio.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_parts: u32,
    pub test_parts: u32,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { train_parts: 4, test_parts: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RidgeConfig {
    pub lag_taps: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub folds: usize,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        Self {
            lag_taps: default_lag_taps(),
            lambdas: default_lambda_grid(),
            folds: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    /// Seeds per primitive, counted up from the run seed.
    pub seeds: u64,
    pub eps: f64,
    pub tolerance: f64,
    /// Name of a primitive whose backward pass is deliberately scaled; used
    /// to confirm that the check catches a broken gradient.
    pub corrupt_op: Option<String>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            seeds: 5,
            eps: 1e-6,
            tolerance: 1e-4,
            corrupt_op: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub encoding: Encoding,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { encoding: Encoding::F32le }
    }
}

/// Every tunable of a run. The output directory is deliberately not part of
/// it, so relocating artifacts does not change the hash.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub optim: OptimizerConfig,
    pub train: TrainConfig,
    pub split: SplitConfig,
    pub prep: PrepConfig,
    pub synth: SynthConfig,
    pub ridge: RidgeConfig,
    pub output: OutputConfig,
    pub gradcheck: GradcheckConfig,
}

impl RunConfig {
    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// SHA-256 over the canonical JSON serialization, as lowercase hex.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(serde_json::to_vec(self).expect("config serializes"));
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("{origin}:{}: expected `key = value`, found `{line}`", i + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| CliError::Config(format!("{origin}:{}: {}", i + 1, e.message())))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Sets one dotted key. The value is read as JSON when it parses as
    /// JSON and as a bare string otherwise.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), CliError> {
        let value = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut root = self.to_json();
        let mut slot = &mut root;
        for part in key.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|m| m.get_mut(part))
                .ok_or_else(|| CliError::Config(format!("unknown config key `{key}`")))?;
        }
        let compatible = match (&*slot, &value) {
            (Value::Object(_), _) => {
                return Err(CliError::Config(format!("`{key}` is a section; set one of its keys")))
            }
            (Value::Null, _) | (_, Value::Null) => true,
            (Value::Number(_), Value::Number(_))
            | (Value::Bool(_), Value::Bool(_))
            | (Value::String(_), Value::String(_))
            | (Value::Array(_), Value::Array(_)) => true,
            _ => false,
        };
        if !compatible {
            return Err(CliError::Config(format!("`{key}` = {raw}: expected a value like {slot}")));
        }
        *slot = value;
        *self = serde_json::from_value(root).map_err(|e| CliError::Config(format!("`{key}` = {raw}: {e}")))?;
        Ok(())
    }

    /// Flat `key = value` rendering that [`RunConfig::apply_text`] reads back.
    pub fn to_flat(&self) -> String {
        fn walk(prefix: &str, v: &Value, out: &mut String) {
            match v {
                Value::Object(m) => {
                    for (k, v) in m {
                        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                        walk(&key, v, out);
                    }
                }
                _ => {
                    let _ = writeln!(out, "{prefix} = {v}");
                }
            }
        }
        let mut out = String::new();
        walk("", &self.to_json(), &mut out);
        out
    }

    /// Dotted keys whose values differ between two serialized configs.
    pub fn diff_keys(a: &Value, b: &Value) -> Vec<String> {
        fn walk(prefix: &str, a: &Value, b: &Value, out: &mut Vec<String>) {
            match (a, b) {
                (Value::Object(x), Value::Object(y)) => {
                    for (k, va) in x {
                        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                        walk(&key, va, y.get(k).unwrap_or(&Value::Null), out);
                    }
                    for k in y.keys().filter(|k| !x.contains_key(*k)) {
                        out.push(if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") });
                    }
                }
                _ if a != b => out.push(prefix.to_string()),
                _ => {}
            }
        }
        let mut out = Vec::new();
        walk("", a, b, &mut out);
        out
    }
}
