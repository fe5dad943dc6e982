//! Command-line surface over the `neurosiren` library.

pub mod commands;
pub mod config;
pub mod plot;

use std::fmt;
use std::path::{Component, Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

pub use config::RunConfig;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

/// A command failure, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Numeric(_) => "numeric",
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind(), self.message())
    }
}

impl std::error::Error for CliError {}

impl From<neurosiren::Error> for CliError {
    fn from(e: neurosiren::Error) -> Self {
        use neurosiren::Error as E;
        match e {
            E::Config(m) => CliError::Config(m),
            E::Numeric(m) => CliError::Numeric(m),
            E::Dimension(m) | E::Data(m) => CliError::Data(m),
            e @ (E::Io(_) | E::Json(_)) => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "neurosiren", version, about = "Predict ROI fMRI time series from EEG")]
pub struct Cli {
    /// Flat `dotted.key = value` configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for every random stream of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Filter, re-reference, resample and HRF-align a raw dataset directory.
    Prep { input: PathBuf },
    /// Write a synthetic EEG/fMRI dataset directory.
    Synth,
    /// Train on a prepared dataset; also fits the ridge baseline.
    Train { data: PathBuf },
    /// Score a checkpoint on the test segment of a prepared dataset.
    Eval { checkpoint: PathBuf, data: PathBuf },
    /// Predict ROI series from an EEG-only directory.
    Predict { checkpoint: PathBuf, eeg: PathBuf },
    /// Compare every analytic gradient against finite differences.
    Gradcheck,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Prep { .. } => "prep",
            Command::Synth => "synth",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Predict { .. } => "predict",
            Command::Gradcheck => "gradcheck",
        }
    }

    /// Input directories, each flagged with whether subdirectories of it
    /// are also off limits for output.
    fn inputs(&self) -> Vec<(&Path, bool)> {
        match self {
            Command::Prep { input } => vec![(input, true)],
            Command::Train { data } => vec![(data, true)],
            Command::Eval { checkpoint, data } => vec![(parent(checkpoint), false), (data, true)],
            Command::Predict { checkpoint, eeg } => vec![(parent(checkpoint), false), (eeg, true)],
            Command::Synth | Command::Gradcheck => vec![],
        }
    }
}

fn parent(p: &Path) -> &Path {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    }
}

/// Configuration assembled from defaults, `--config`, `--set` and `--seed`
/// in that order.
pub struct ResolvedConfig {
    pub config: RunConfig,
    /// Whether anything beyond the defaults was supplied.
    pub explicit: bool,
}

impl Cli {
    pub fn resolve_config(&self) -> Result<ResolvedConfig, CliError> {
        let mut config = RunConfig::default();
        if let Some(path) = &self.config {
            config.apply_file(path)?;
        }
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, found `{s}`")))?;
            config.set(k.trim(), v.trim())?;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        Ok(ResolvedConfig {
            config,
            explicit: self.config.is_some() || !self.set.is_empty() || self.seed.is_some(),
        })
    }
}

fn normalize(p: &Path) -> PathBuf {
    let abs = std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf());
    let abs = abs.canonicalize().unwrap_or(abs);
    let mut out = PathBuf::new();
    for c in abs.components() {
        match c {
            Component::ParentDir => {
                out.pop();
            }
            Component::CurDir => {}
            c => out.push(c),
        }
    }
    out
}

fn check_out_dir(cli: &Cli) -> Result<(), CliError> {
    let out = normalize(&cli.out);
    for (input, recursive) in cli.command.inputs() {
        let input = normalize(input);
        if out == input || (recursive && out.starts_with(&input)) {
            return Err(CliError::Config(format!(
                "output directory {} would write into input directory {}; inputs are never modified",
                cli.out.display(),
                input.display()
            )));
        }
    }
    Ok(())
}

/// Writes pretty JSON to `path`.
pub fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

/// Runs one command and writes `result.json` to the output directory.
/// Returns the process exit code.
pub fn run(cli: &Cli) -> u8 {
    let command = cli.command.name();
    let mut hash = Value::Null;
    let mut seed = Value::Null;
    let mut out_ok = false;
    let outcome = (|| {
        check_out_dir(cli)?;
        out_ok = true;
        std::fs::create_dir_all(&cli.out)
            .map_err(|e| CliError::Data(format!("cannot create {}: {e}", cli.out.display())))?;
        let resolved = cli.resolve_config()?;
        let from_checkpoint = matches!(cli.command, Command::Eval { .. } | Command::Predict { .. });
        if resolved.explicit || !from_checkpoint {
            hash = json!(resolved.config.hash());
            seed = json!(resolved.config.seed);
        }
        commands::dispatch(cli, resolved)
    })();
    let (code, mut result) = match outcome {
        Ok(details) => {
            if let Some(h) = details.get("config_hash") {
                hash = h.clone();
            }
            if let Some(s) = details.get("seed") {
                seed = s.clone();
            }
            (0, json!({ "command": command, "status": "ok", "exit_code": 0, "details": details }))
        }
        Err(e) => {
            log::error!("{e}");
            let code = e.exit_code();
            (code, json!({ "command": command, "status": "error", "exit_code": code, "error": { "kind": e.kind(), "message": e.message() } }))
        }
    };
    result["config_hash"] = hash;
    result["seed"] = seed;
    if out_ok && cli.out.is_dir() {
        if let Err(e) = write_json(&cli.out.join("result.json"), &result) {
            log::error!("{e}");
        }
    }
    code
}

/// Logger writing bare messages to standard error.
pub fn init_logging() {
    use std::io::Write;
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format(|buf, rec| match rec.level() {
            log::Level::Info => writeln!(buf, "{}", rec.args()),
            level => writeln!(buf, "{}: {}", level.as_str().to_lowercase(), rec.args()),
        })
        .try_init();
}
