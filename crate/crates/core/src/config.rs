//! Plain-text experiment configuration.
//!
//! ```text
//! # comment
//! [optim]
//! lr = 1e-3
//! batch_size = 128
//! ```
//!
//! Keys are addressed as `section.key`; keys before the first section header
//! have no prefix. Command-line overrides use the same `section.key=value`
//! form and win over file values. Errors carry a 1-based line and column;
//! line 0 denotes an override.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{GramMode, LossTerms};
use crate::network::{Activation, AuxSpec};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub value: String,
    pub line: usize,
    pub key_column: usize,
    pub value_column: usize,
}

/// Parsed but untyped `section.key → value` pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RawConfig {
    pub entries: BTreeMap<String, Entry>,
}

fn err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Config { line, column, message: message.into() }
}

fn valid_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Column (1-based, in characters) of byte offset `at` within `line`.
fn column_of(line: &str, at: usize) -> usize {
    line[..at].chars().count() + 1
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut section = String::new();
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let content = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            };
            let start = content.len() - content.trim_start().len();
            let body = content.trim();
            if body.is_empty() {
                continue;
            }
            if body.starts_with('[') {
                let Some(close) = body.find(']') else {
                    return Err(err(ln, column_of(raw, start), "section header is missing `]`"));
                };
                if !body[close + 1..].trim().is_empty() {
                    return Err(err(ln, column_of(raw, start + close + 1), "unexpected text after section header"));
                }
                let name = body[1..close].trim();
                if !valid_ident(name) {
                    return Err(err(ln, column_of(raw, start + 1), format!("invalid section name `{name}`")));
                }
                section = name.to_string();
                continue;
            }
            let Some(eq) = content.find('=') else {
                return Err(err(ln, column_of(raw, start), "expected `key = value`"));
            };
            let key = content[..eq].trim();
            if !valid_ident(key) {
                return Err(err(ln, column_of(raw, start), format!("invalid key `{key}`")));
            }
            let after = &content[eq + 1..];
            let value = after.trim();
            let value_at = eq + 1 + (after.len() - after.trim_start().len());
            let full = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
            if let Some(prev) = entries.get(&full) {
                let prev: &Entry = prev;
                return Err(err(ln, column_of(raw, start), format!("duplicate key `{full}` (first set on line {})", prev.line)));
            }
            entries.insert(
                full,
                Entry { value: value.to_string(), line: ln, key_column: column_of(raw, start), value_column: column_of(raw, value_at) },
            );
        }
        Ok(Self { entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            line: 0,
            column: 0,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    /// Applies one `section.key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let Some(eq) = spec.find('=') else {
            return Err(err(0, 1, format!("override `{spec}` is not key=value")));
        };
        let key = spec[..eq].trim();
        let parts: Vec<&str> = key.split('.').collect();
        if parts.is_empty() || parts.len() > 2 || !parts.iter().all(|p| valid_ident(p)) {
            return Err(err(0, 1, format!("override key `{key}` must be `section.key`")));
        }
        self.entries
            .insert(key.to_string(), Entry { value: spec[eq + 1..].trim().to_string(), line: 0, key_column: 1, value_column: eq + 2 });
        Ok(())
    }
}

/// How images reach the trainer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetId {
    Cifar10,
    /// Generated class-conditional images; the value offsets the prototype
    /// seed so two synthetic sources can differ.
    Synthetic(u64),
    /// IDX files in a subdirectory of the data root.
    Idx(String),
}

impl FromStr for DatasetId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (head, tail) = match s.split_once(':') {
            Some((h, t)) => (h, Some(t)),
            None => (s, None),
        };
        match (head, tail) {
            ("cifar10", None) => Ok(DatasetId::Cifar10),
            ("synthetic", None) => Ok(DatasetId::Synthetic(0)),
            ("synthetic", Some(t)) => t.parse().map(DatasetId::Synthetic).map_err(|_| format!("bad synthetic variant `{t}`")),
            ("idx", Some(t)) if !t.is_empty() => Ok(DatasetId::Idx(t.to_string())),
            _ => Err(format!("unknown dataset `{s}` (expected cifar10, synthetic[:n] or idx:<subdir>)")),
        }
    }
}

impl std::fmt::Display for DatasetId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DatasetId::Cifar10 => f.write_str("cifar10"),
            DatasetId::Synthetic(0) => f.write_str("synthetic"),
            DatasetId::Synthetic(n) => write!(f, "synthetic:{n}"),
            DatasetId::Idx(d) => write!(f, "idx:{d}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Cosine,
    Constant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub channels: Vec<usize>,
    pub activation: String,
    pub skip_last: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub oja: bool,
    pub sphere: bool,
    pub orth: bool,
    pub lambda: f64,
    pub gram: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Total epochs, divided equally among blocks.
    pub epochs: usize,
    pub schedule: Schedule,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub dataset: DatasetId,
    /// Dataset root; empty falls back to the environment.
    pub dir: String,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub normalize: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub channels: usize,
    pub size: usize,
    pub noise: f64,
    pub max_shift: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaConfig {
    pub batch: usize,
    pub dim: usize,
    pub width: usize,
    pub steps: usize,
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearityConfig {
    pub dim: usize,
    pub width: usize,
    pub hidden: usize,
    pub samples: usize,
    pub eval_samples: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Population deviations are `exp(-i / spectrum_decay)`.
    pub spectrum_decay: f64,
    pub activation: String,
    pub components: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OjaConfig {
    pub spectrum: Vec<f64>,
    pub samples: usize,
    pub eta: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    /// Entries such as `sphere+orth+phi`.
    pub combos: Vec<String>,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    pub source: DatasetId,
    pub target: DatasetId,
}

/// Fully resolved experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub phi: AuxSpec,
    pub loss: LossConfig,
    pub optim: OptimConfig,
    pub data: DataConfig,
    pub synthetic: SyntheticConfig,
    pub probe: ProbeConfig,
    pub knn_k: usize,
    pub lemma: LemmaConfig,
    pub linearity: LinearityConfig,
    pub oja: OjaConfig,
    pub ablation: AblationConfig,
    pub transfer: TransferConfig,
}

pub const TABLE2_COMBOS: [&str; 7] = ["oja", "oja+phi", "oja+orth+phi", "sphere", "sphere+phi", "orth+phi", "sphere+orth+phi"];

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            model: ModelConfig { channels: vec![48, 96, 192], activation: "leaky_relu".into(), skip_last: true },
            phi: AuxSpec::default(),
            loss: LossConfig { oja: false, sphere: true, orth: true, lambda: 0.8, gram: "normalized".into() },
            optim: OptimConfig {
                lr: 1e-3,
                weight_decay: 0.05,
                batch_size: 128,
                epochs: 30,
                schedule: Schedule::Cosine,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            data: DataConfig {
                dataset: DatasetId::Cifar10,
                dir: String::new(),
                train_per_class: 500,
                test_per_class: 200,
                normalize: true,
            },
            synthetic: SyntheticConfig {
                classes: 10,
                train_per_class: 50,
                test_per_class: 20,
                channels: 3,
                size: 32,
                noise: 0.5,
                max_shift: 3,
            },
            probe: ProbeConfig { epochs: 20, lr: 1e-3, batch_size: 128, weight_decay: 0.0 },
            knn_k: 10,
            lemma: LemmaConfig { batch: 64, dim: 32, width: 8, steps: 20_000, lr: 1e-2 },
            linearity: LinearityConfig {
                dim: 64,
                width: 40,
                hidden: 128,
                samples: 2048,
                eval_samples: 512,
                epochs: 20,
                lr: 3e-3,
                batch_size: 128,
                spectrum_decay: 12.0,
                activation: "leaky_relu".into(),
                components: 36,
            },
            oja: OjaConfig { spectrum: vec![3.0, 1.0, 0.3], samples: 400, eta: 0.01, steps: 2000 },
            ablation: AblationConfig { combos: TABLE2_COMBOS.iter().map(|s| s.to_string()).collect(), seeds: vec![0, 1, 2] },
            transfer: TransferConfig { source: DatasetId::Synthetic(1), target: DatasetId::Synthetic(0) },
        }
    }
}

/// Typed view over a [`RawConfig`] that remembers which keys were read.
struct Reader<'a> {
    raw: &'a RawConfig,
    used: std::collections::BTreeSet<&'a str>,
}

impl<'a> Reader<'a> {
    fn get<T, F>(&mut self, key: &'static str, slot: &mut T, parse: F) -> Result<()>
    where
        F: Fn(&str) -> std::result::Result<T, String>,
    {
        if let Some((k, e)) = self.raw.entries.get_key_value(key) {
            self.used.insert(k.as_str());
            *slot = parse(&e.value).map_err(|m| err(e.line, e.value_column, format!("{key}: {m}")))?;
        }
        Ok(())
    }

    fn num<T: FromStr>(&mut self, key: &'static str, slot: &mut T) -> Result<()> {
        self.get(key, slot, |v| v.parse::<T>().map_err(|_| format!("cannot parse `{v}`")))
    }

    fn flag(&mut self, key: &'static str, slot: &mut bool) -> Result<()> {
        self.get(key, slot, |v| match v {
            "true" | "yes" | "1" | "on" => Ok(true),
            "false" | "no" | "0" | "off" => Ok(false),
            _ => Err(format!("expected true or false, got `{v}`")),
        })
    }

    fn text(&mut self, key: &'static str, slot: &mut String) -> Result<()> {
        self.get(key, slot, |v| Ok(v.trim_matches('"').to_string()))
    }

    fn list<T: FromStr>(&mut self, key: &'static str, slot: &mut Vec<T>) -> Result<()> {
        self.get(key, slot, |v| {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<T>().map_err(|_| format!("cannot parse list item `{s}`")))
                .collect()
        })
    }

    fn parsed<T: FromStr<Err = String>>(&mut self, key: &'static str, slot: &mut T) -> Result<()> {
        self.get(key, slot, |v| v.parse::<T>())
    }

    fn finish(self) -> Result<()> {
        for (k, e) in &self.raw.entries {
            if !self.used.contains(k.as_str()) {
                return Err(err(e.line, e.key_column, format!("unknown key `{k}`")));
            }
        }
        Ok(())
    }
}

impl FromStr for Schedule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cosine" => Ok(Schedule::Cosine),
            "constant" => Ok(Schedule::Constant),
            _ => Err(format!("unknown schedule `{s}`")),
        }
    }
}

impl TrainConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let mut c = TrainConfig::default();
        let mut r = Reader { raw, used: Default::default() };
        r.num("run.seed", &mut c.seed)?;

        r.list("model.channels", &mut c.model.channels)?;
        r.text("model.activation", &mut c.model.activation)?;
        r.flag("model.skip_last", &mut c.model.skip_last)?;

        r.flag("phi.enabled", &mut c.phi.enabled)?;
        r.num("phi.depth", &mut c.phi.depth)?;
        r.num("phi.d_proj", &mut c.phi.d_proj)?;

        r.flag("loss.oja", &mut c.loss.oja)?;
        r.flag("loss.sphere", &mut c.loss.sphere)?;
        r.flag("loss.orth", &mut c.loss.orth)?;
        r.num("loss.lambda", &mut c.loss.lambda)?;
        r.text("loss.gram", &mut c.loss.gram)?;

        r.num("optim.lr", &mut c.optim.lr)?;
        r.num("optim.weight_decay", &mut c.optim.weight_decay)?;
        r.num("optim.batch_size", &mut c.optim.batch_size)?;
        r.num("optim.epochs", &mut c.optim.epochs)?;
        r.parsed("optim.schedule", &mut c.optim.schedule)?;
        r.num("optim.beta1", &mut c.optim.beta1)?;
        r.num("optim.beta2", &mut c.optim.beta2)?;
        r.num("optim.eps", &mut c.optim.eps)?;

        r.parsed("data.dataset", &mut c.data.dataset)?;
        r.text("data.dir", &mut c.data.dir)?;
        r.num("data.train_per_class", &mut c.data.train_per_class)?;
        r.num("data.test_per_class", &mut c.data.test_per_class)?;
        r.flag("data.normalize", &mut c.data.normalize)?;

        r.num("synthetic.classes", &mut c.synthetic.classes)?;
        r.num("synthetic.train_per_class", &mut c.synthetic.train_per_class)?;
        r.num("synthetic.test_per_class", &mut c.synthetic.test_per_class)?;
        r.num("synthetic.channels", &mut c.synthetic.channels)?;
        r.num("synthetic.size", &mut c.synthetic.size)?;
        r.num("synthetic.noise", &mut c.synthetic.noise)?;
        r.num("synthetic.max_shift", &mut c.synthetic.max_shift)?;

        r.num("probe.epochs", &mut c.probe.epochs)?;
        r.num("probe.lr", &mut c.probe.lr)?;
        r.num("probe.batch_size", &mut c.probe.batch_size)?;
        r.num("probe.weight_decay", &mut c.probe.weight_decay)?;
        r.num("knn.k", &mut c.knn_k)?;

        r.num("lemma.batch", &mut c.lemma.batch)?;
        r.num("lemma.dim", &mut c.lemma.dim)?;
        r.num("lemma.width", &mut c.lemma.width)?;
        r.num("lemma.steps", &mut c.lemma.steps)?;
        r.num("lemma.lr", &mut c.lemma.lr)?;

        r.num("linearity.dim", &mut c.linearity.dim)?;
        r.num("linearity.width", &mut c.linearity.width)?;
        r.num("linearity.hidden", &mut c.linearity.hidden)?;
        r.num("linearity.samples", &mut c.linearity.samples)?;
        r.num("linearity.eval_samples", &mut c.linearity.eval_samples)?;
        r.num("linearity.epochs", &mut c.linearity.epochs)?;
        r.num("linearity.lr", &mut c.linearity.lr)?;
        r.num("linearity.batch_size", &mut c.linearity.batch_size)?;
        r.num("linearity.spectrum_decay", &mut c.linearity.spectrum_decay)?;
        r.text("linearity.activation", &mut c.linearity.activation)?;
        r.num("linearity.components", &mut c.linearity.components)?;

        r.list("oja.spectrum", &mut c.oja.spectrum)?;
        r.num("oja.samples", &mut c.oja.samples)?;
        r.num("oja.eta", &mut c.oja.eta)?;
        r.num("oja.steps", &mut c.oja.steps)?;

        r.list("ablation.combos", &mut c.ablation.combos)?;
        r.list("ablation.seeds", &mut c.ablation.seeds)?;

        r.parsed("transfer.source", &mut c.transfer.source)?;
        r.parsed("transfer.target", &mut c.transfer.target)?;
        r.finish()?;

        c.validate(raw)?;
        Ok(c)
    }

    /// Defaults overlaid with the file at `path` (if any) and `overrides`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut raw = match path {
            Some(p) => RawConfig::read(p)?,
            None => RawConfig::default(),
        };
        for o in overrides {
            raw.apply_override(o)?;
        }
        Self::from_raw(&raw)
    }

    fn validate(&self, raw: &RawConfig) -> Result<()> {
        let at = |key: &str, msg: String| {
            let (line, column) = raw.entries.get(key).map_or((0, 0), |e| (e.line, e.value_column));
            err(line, column, format!("{key}: {msg}"))
        };
        if !(self.loss.oja || self.loss.sphere || self.loss.orth) {
            return Err(at("loss.sphere", "at least one loss term must be enabled".into()));
        }
        if self.optim.batch_size < 2 {
            return Err(at("optim.batch_size", "must be at least 2".into()));
        }
        if self.model.channels.is_empty() || self.model.channels.contains(&0) {
            return Err(at("model.channels", "need at least one positive width".into()));
        }
        if !(self.loss.lambda >= 0.0) {
            return Err(at("loss.lambda", "must be nonnegative".into()));
        }
        if !(self.optim.lr > 0.0) {
            return Err(at("optim.lr", "must be positive".into()));
        }
        if self.phi.depth > 2 {
            return Err(at("phi.depth", "must be 0, 1 or 2".into()));
        }
        if self.knn_k == 0 {
            return Err(at("knn.k", "must be at least 1".into()));
        }
        self.activation().map_err(|m| at("model.activation", m))?;
        self.linearity.activation.parse::<Activation>().map_err(|m| at("linearity.activation", m.to_string()))?;
        self.gram_mode().map_err(|m| at("loss.gram", m))?;
        for combo in &self.ablation.combos {
            parse_combo(combo).map_err(|m| at("ablation.combos", m))?;
        }
        Ok(())
    }

    pub fn activation(&self) -> std::result::Result<Activation, String> {
        self.model.activation.parse::<Activation>().map_err(|e| e.to_string())
    }

    pub fn gram_mode(&self) -> std::result::Result<GramMode, String> {
        match self.loss.gram.as_str() {
            "normalized" => Ok(GramMode::Normalized),
            "raw" => Ok(GramMode::Raw),
            other => Err(format!("unknown gram mode `{other}`")),
        }
    }

    pub fn loss_terms(&self) -> LossTerms {
        LossTerms {
            oja: self.loss.oja,
            sphere: self.loss.sphere,
            orth: self.loss.orth,
            lambda: self.loss.lambda,
            gram: self.gram_mode().unwrap_or(GramMode::Normalized),
        }
    }

    /// Canonical text form: every key, one per line, sorted by section.
    /// Parsing it back yields an equal config.
    pub fn to_text(&self) -> String {
        let list = |v: &[usize]| v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
        let flist = |v: &[f64]| v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let mut sec = |name: &str, kv: Vec<(&str, String)>| {
            let _ = writeln!(s, "[{name}]");
            for (k, v) in kv {
                let _ = writeln!(s, "{k} = {v}");
            }
            s.push('\n');
        };
        sec("run", vec![("seed", self.seed.to_string())]);
        sec(
            "model",
            vec![
                ("channels", list(&self.model.channels)),
                ("activation", self.model.activation.clone()),
                ("skip_last", self.model.skip_last.to_string()),
            ],
        );
        sec(
            "phi",
            vec![("enabled", self.phi.enabled.to_string()), ("depth", self.phi.depth.to_string()), ("d_proj", self.phi.d_proj.to_string())],
        );
        sec(
            "loss",
            vec![
                ("oja", self.loss.oja.to_string()),
                ("sphere", self.loss.sphere.to_string()),
                ("orth", self.loss.orth.to_string()),
                ("lambda", self.loss.lambda.to_string()),
                ("gram", self.loss.gram.clone()),
            ],
        );
        let sched = match self.optim.schedule {
            Schedule::Cosine => "cosine",
            Schedule::Constant => "constant",
        };
        sec(
            "optim",
            vec![
                ("lr", self.optim.lr.to_string()),
                ("weight_decay", self.optim.weight_decay.to_string()),
                ("batch_size", self.optim.batch_size.to_string()),
                ("epochs", self.optim.epochs.to_string()),
                ("schedule", sched.to_string()),
                ("beta1", self.optim.beta1.to_string()),
                ("beta2", self.optim.beta2.to_string()),
                ("eps", self.optim.eps.to_string()),
            ],
        );
        sec(
            "data",
            vec![
                ("dataset", self.data.dataset.to_string()),
                ("dir", self.data.dir.clone()),
                ("train_per_class", self.data.train_per_class.to_string()),
                ("test_per_class", self.data.test_per_class.to_string()),
                ("normalize", self.data.normalize.to_string()),
            ],
        );
        sec(
            "synthetic",
            vec![
                ("classes", self.synthetic.classes.to_string()),
                ("train_per_class", self.synthetic.train_per_class.to_string()),
                ("test_per_class", self.synthetic.test_per_class.to_string()),
                ("channels", self.synthetic.channels.to_string()),
                ("size", self.synthetic.size.to_string()),
                ("noise", self.synthetic.noise.to_string()),
                ("max_shift", self.synthetic.max_shift.to_string()),
            ],
        );
        sec(
            "probe",
            vec![
                ("epochs", self.probe.epochs.to_string()),
                ("lr", self.probe.lr.to_string()),
                ("batch_size", self.probe.batch_size.to_string()),
                ("weight_decay", self.probe.weight_decay.to_string()),
            ],
        );
        sec("knn", vec![("k", self.knn_k.to_string())]);
        sec(
            "lemma",
            vec![
                ("batch", self.lemma.batch.to_string()),
                ("dim", self.lemma.dim.to_string()),
                ("width", self.lemma.width.to_string()),
                ("steps", self.lemma.steps.to_string()),
                ("lr", self.lemma.lr.to_string()),
            ],
        );
        let l = &self.linearity;
        sec(
            "linearity",
            vec![
                ("dim", l.dim.to_string()),
                ("width", l.width.to_string()),
                ("hidden", l.hidden.to_string()),
                ("samples", l.samples.to_string()),
                ("eval_samples", l.eval_samples.to_string()),
                ("epochs", l.epochs.to_string()),
                ("lr", l.lr.to_string()),
                ("batch_size", l.batch_size.to_string()),
                ("spectrum_decay", l.spectrum_decay.to_string()),
                ("activation", l.activation.clone()),
                ("components", l.components.to_string()),
            ],
        );
        sec(
            "oja",
            vec![
                ("spectrum", flist(&self.oja.spectrum)),
                ("samples", self.oja.samples.to_string()),
                ("eta", self.oja.eta.to_string()),
                ("steps", self.oja.steps.to_string()),
            ],
        );
        sec(
            "ablation",
            vec![
                ("combos", self.ablation.combos.join(",")),
                ("seeds", self.ablation.seeds.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")),
            ],
        );
        sec("transfer", vec![("source", self.transfer.source.to_string()), ("target", self.transfer.target.to_string())]);
        s.truncate(s.trim_end().len());
        s.push('\n');
        s
    }
}

/// Loss terms and `φ` switch named by an ablation entry such as
/// `sphere+orth+phi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Combo {
    pub oja: bool,
    pub sphere: bool,
    pub orth: bool,
    pub phi: bool,
}

impl Combo {
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        for (on, name) in [(self.oja, "oja"), (self.sphere, "sphere"), (self.orth, "orth"), (self.phi, "phi")] {
            if on {
                parts.push(name);
            }
        }
        parts.join("+")
    }
}

pub fn parse_combo(s: &str) -> std::result::Result<Combo, String> {
    let mut c = Combo { oja: false, sphere: false, orth: false, phi: false };
    for part in s.split('+').map(str::trim) {
        let slot = match part {
            "oja" => &mut c.oja,
            "sphere" => &mut c.sphere,
            "orth" => &mut c.orth,
            "phi" => &mut c.phi,
            other => return Err(format!("unknown ablation component `{other}` in `{s}`")),
        };
        if *slot {
            return Err(format!("component `{part}` repeated in `{s}`"));
        }
        *slot = true;
    }
    if !(c.oja || c.sphere || c.orth) {
        return Err(format!("`{s}` enables no loss term"));
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_comments() {
        let raw = RawConfig::parse("top = 1\n# c\n[optim]\n  lr = 2e-3 # trailing\n").unwrap();
        assert_eq!(raw.entries["top"].value, "1");
        let e = &raw.entries["optim.lr"];
        assert_eq!((e.value.as_str(), e.line, e.key_column, e.value_column), ("2e-3", 4, 3, 8));
    }

    #[test]
    fn errors_carry_position() {
        let cases = [("[optim\n", 1, 1), ("\n  novalue\n", 2, 3), ("a = 1\na = 2\n", 2, 1), ("[x] y\n", 1, 4), ("bad key = 1\n", 1, 1)];
        for (text, line, column) in cases {
            match RawConfig::parse(text) {
                Err(Error::Config { line: l, column: c, .. }) => assert_eq!((l, c), (line, column), "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn unknown_key_and_bad_value() {
        let raw = RawConfig::parse("[optim]\nlr = 1\nfoo = 2\n").unwrap();
        assert!(matches!(TrainConfig::from_raw(&raw), Err(Error::Config { line: 3, column: 1, .. })));
        let raw = RawConfig::parse("[optim]\nbatch_size =  x\n").unwrap();
        assert!(matches!(TrainConfig::from_raw(&raw), Err(Error::Config { line: 2, column: 15, .. })));
    }

    #[test]
    fn overrides_win() {
        let mut raw = RawConfig::parse("[optim]\nlr = 0.1\n").unwrap();
        raw.apply_override("optim.lr=0.5").unwrap();
        assert_eq!(TrainConfig::from_raw(&raw).unwrap().optim.lr, 0.5);
        assert!(raw.apply_override("nonsense").is_err());
    }

    #[test]
    fn canonical_text_round_trips() {
        let mut c = TrainConfig::default();
        c.loss.lambda = 0.1 + 0.2;
        c.data.dataset = DatasetId::Idx("fashion".into());
        let back = TrainConfig::from_raw(&RawConfig::parse(&c.to_text()).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn no_loss_rejected() {
        let raw = RawConfig::parse("[loss]\nsphere = false\north = false\n").unwrap();
        assert!(TrainConfig::from_raw(&raw).is_err());
    }

    #[test]
    fn combos() {
        assert_eq!(parse_combo("sphere+orth+phi").unwrap().label(), "sphere+orth+phi");
        assert!(parse_combo("phi").is_err());
        assert!(parse_combo("sphere+sphere").is_err());
    }
}
