//! Run directory: manifest, metrics log, summary and error record.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::Serialize;
use serde_json::{json, Value};

/// Bumped whenever a field of the summary, manifest or error record changes
/// meaning or is removed.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] sphere::Error),
    #[error("check failed: {0}")]
    CheckFailed(String),
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::CheckFailed(_) => "check_failed",
            CliError::Output { .. } => "output",
            CliError::Json(_) => "serialization",
        }
    }

    /// Process exit status: 2 for configuration problems, 3 for missing
    /// data, 4 for failed checks, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(sphere::Error::Config { .. }) => 2,
            CliError::Core(sphere::Error::DatasetMissing(_)) => 3,
            CliError::CheckFailed(_) => 4,
            _ => 1,
        }
    }

    pub fn record(&self, command: &str) -> Value {
        let mut rec = json!({
            "schema_version": SCHEMA_VERSION,
            "command": command,
            "status": "error",
            "kind": self.kind(),
            "message": self.to_string(),
        });
        match self {
            CliError::Core(sphere::Error::Config { line, column, .. }) => {
                rec["line"] = json!(line);
                rec["column"] = json!(column);
            }
            CliError::Core(sphere::Error::Format { offset, .. }) => rec["offset"] = json!(offset),
            CliError::Core(sphere::Error::TrainingDivergence { block, step, .. }) => {
                rec["block"] = json!(block);
                rec["step"] = json!(step);
            }
            _ => {}
        }
        rec
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn describe_in(dir: &Path) -> Option<String> {
    Command::new("git")
        .arg("-C")
        .arg(dir)
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
}

/// `git describe` of the source tree this binary was built from, falling
/// back to the working directory, then to `unknown`.
pub fn git_describe() -> String {
    describe_in(Path::new(env!("CARGO_MANIFEST_DIR"))).or_else(|| describe_in(Path::new("."))).unwrap_or_else(|| "unknown".into())
}

pub struct RunDir {
    pub root: PathBuf,
    metrics: Option<BufWriter<File>>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Output { path: path.to_path_buf(), source }
}

fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

impl RunDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(io_err(root))?;
        Ok(Self { root: root.to_path_buf(), metrics: None })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_manifest(&self, command: &str, seed: u64, config_text: &str, overrides: &[String]) -> CliResult<()> {
        let manifest = json!({
            "schema_version": SCHEMA_VERSION,
            "command": command,
            "seed": seed,
            "git_describe": git_describe(),
            "overrides": overrides,
            "config": config_text,
        });
        write_json(&self.path("manifest.json"), &manifest)?;
        let cfg = self.path("config.resolved");
        fs::write(&cfg, config_text).map_err(io_err(&cfg))
    }

    /// Appends one record to `metrics.jsonl`, tagging it with `run` when
    /// several trainings share the log.
    pub fn log_metric<T: Serialize>(&mut self, run: Option<&str>, record: &T) -> CliResult<()> {
        if self.metrics.is_none() {
            let path = self.path("metrics.jsonl");
            self.metrics = Some(BufWriter::new(File::create(&path).map_err(io_err(&path))?));
        }
        let mut value = serde_json::to_value(record)?;
        if let (Some(run), Value::Object(map)) = (run, &mut value) {
            map.insert("run".into(), json!(run));
        }
        let path = self.path("metrics.jsonl");
        let w = self.metrics.as_mut().expect("opened above");
        serde_json::to_writer(&mut *w, &value)?;
        w.write_all(b"\n").and_then(|_| w.flush()).map_err(io_err(&path))
    }

    pub fn write_summary<T: Serialize>(&self, command: &str, seed: u64, result: &T) -> CliResult<()> {
        let summary = json!({
            "schema_version": SCHEMA_VERSION,
            "command": command,
            "seed": seed,
            "status": "ok",
            "result": result,
        });
        write_json(&self.path("summary.json"), &summary)
    }
}

/// Writes `error.json` into `root`, creating it if needed.
pub fn write_error(root: &Path, record: &Value) -> CliResult<()> {
    fs::create_dir_all(root).map_err(io_err(root))?;
    write_json(&root.join("error.json"), record)
}
