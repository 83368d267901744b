//! Pipeline configuration, read from TOML.
//!
//! ```toml
//! seed = 13
//! restarts = 4
//! gruen_threshold = 0.7
//!
//! [paths]
//! records = "records.jsonl"
//! embeddings = "embeddings.txt"
//! nouns = "nouns.txt"
//! out_dir = "out"
//!
//! [mix]
//! strategy = "uniform"
//! bins = 10
//!
//! [endpoints]
//! generator = "stub"
//! scorer = "const:1.0"
//! ```
//!
//! Relative paths resolve against the directory of the config file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::augment::{uniform_bins, MixSpec, MixStrategy};
use crate::merge::MergeParams;
use crate::smatch::DEFAULT_RESTARTS;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {error}")]
    Io { path: PathBuf, error: std::io::Error },
    #[error("config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub records: PathBuf,
    pub embeddings: PathBuf,
    pub nouns: PathBuf,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixKind {
    Random,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixConfig {
    pub strategy: MixKind,
    #[serde(default = "default_percent")]
    pub percent: f64,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

fn default_percent() -> f64 {
    100.0
}

fn default_bins() -> usize {
    10
}

impl Default for MixConfig {
    fn default() -> Self {
        MixConfig { strategy: MixKind::Random, percent: default_percent(), bins: default_bins() }
    }
}

impl MixConfig {
    pub fn spec(&self, seed: u64) -> MixSpec {
        let strategy = match self.strategy {
            MixKind::Random => MixStrategy::Random { percent: self.percent },
            MixKind::Uniform => MixStrategy::UniformCoverage { edges: uniform_bins(self.bins) },
        };
        MixSpec { strategy, seed }
    }
}

/// Where captions and quality scores come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Endpoint {
    /// Built-in deterministic realizer.
    Stub,
    /// Every caption gets this score.
    Const(f64),
    /// Word-count formula of the service's mock mode, computed locally.
    MockGruen,
    /// In-process mock of the model service.
    BridgeMock,
    /// Model service at `host:port`.
    Bridge(String),
}

impl FromStr for Endpoint {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ConfigError::Invalid(format!("unknown endpoint `{s}`"));
        Ok(match s.trim() {
            "stub" => Endpoint::Stub,
            "mock-gruen" => Endpoint::MockGruen,
            "bridge:mock" => Endpoint::BridgeMock,
            t => {
                if let Some(v) = t.strip_prefix("const:") {
                    let x: f64 = v.parse().map_err(|_| bad())?;
                    if !(0.0..=1.0).contains(&x) {
                        return Err(ConfigError::Invalid(format!("constant score {x} is outside [0, 1]")));
                    }
                    Endpoint::Const(x)
                } else if let Some(addr) = t.strip_prefix("bridge:").filter(|a| a.contains(':')) {
                    Endpoint::Bridge(addr.to_string())
                } else {
                    return Err(bad());
                }
            }
        })
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Stub => write!(f, "stub"),
            Endpoint::Const(x) => write!(f, "const:{x}"),
            Endpoint::MockGruen => write!(f, "mock-gruen"),
            Endpoint::BridgeMock => write!(f, "bridge:mock"),
            Endpoint::Bridge(a) => write!(f, "bridge:{a}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Endpoints {
    #[serde(default = "default_generator")]
    pub generator: String,
    #[serde(default = "default_scorer")]
    pub scorer: String,
}

fn default_generator() -> String {
    "stub".into()
}

fn default_scorer() -> String {
    "const:1.0".into()
}

impl Default for Endpoints {
    fn default() -> Self {
        Endpoints { generator: default_generator(), scorer: default_scorer() }
    }
}

impl Endpoints {
    pub fn generator(&self) -> Result<Endpoint, ConfigError> {
        match self.generator.parse()? {
            e @ (Endpoint::Stub | Endpoint::BridgeMock | Endpoint::Bridge(_)) => Ok(e),
            e => Err(ConfigError::Invalid(format!("`{e}` cannot generate captions"))),
        }
    }

    pub fn scorer(&self) -> Result<Endpoint, ConfigError> {
        match self.scorer.parse()? {
            Endpoint::Stub => Err(ConfigError::Invalid("`stub` cannot score captions".into())),
            e => Ok(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_gruen")]
    pub gruen_threshold: f64,
    /// Upper bound on outstanding requests to an external model service.
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// Number of coverage bands in the report.
    #[serde(default = "default_bins")]
    pub bands: usize,
    pub paths: Paths,
    #[serde(default)]
    pub merge: MergeParams,
    #[serde(default)]
    pub mix: MixConfig,
    #[serde(default)]
    pub endpoints: Endpoints,
}

fn default_restarts() -> usize {
    DEFAULT_RESTARTS
}

fn default_gruen() -> f64 {
    0.7
}

fn default_in_flight() -> usize {
    16
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|error| ConfigError::Io { path: path.into(), error })?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse { path: path.into(), message },
            e => e,
        })?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: PathBuf::new(), message: e.to_string() })
    }

    /// Makes relative paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.paths.records, &mut self.paths.embeddings, &mut self.paths.nouns, &mut self.paths.out_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Checks value ranges, endpoint syntax and that every input exists.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.gruen_threshold) {
            return Err(ConfigError::Invalid(format!("gruen_threshold {} is outside [0, 1]", self.gruen_threshold)));
        }
        if self.restarts == 0 || self.max_in_flight == 0 || self.bands == 0 || self.mix.bins == 0 {
            return Err(ConfigError::Invalid("restarts, max_in_flight, bands and mix.bins must be positive".into()));
        }
        self.merge.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.mix.spec(self.seed).validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.endpoints.generator()?;
        self.endpoints.scorer()?;
        for (name, p) in [
            ("records", &self.paths.records),
            ("embeddings", &self.paths.embeddings),
            ("nouns", &self.paths.nouns),
        ] {
            if !p.is_file() {
                return Err(ConfigError::Invalid(format!("{name} file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// SHA-256 over the settings and the contents of the input files, so the
    /// hash does not depend on where the files or outputs live.
    pub fn hash(&self) -> Result<String, ConfigError> {
        let mut settings = serde_json::to_value(self).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let Some(obj) = settings.as_object_mut() {
            obj.remove("paths");
        }
        let mut h = Sha256::new();
        h.update(settings.to_string().as_bytes());
        for p in [&self.paths.records, &self.paths.embeddings, &self.paths.nouns] {
            let bytes = std::fs::read(p).map_err(|error| ConfigError::Io { path: p.clone(), error })?;
            h.update(Sha256::digest(&bytes));
        }
        Ok(format!("{:x}", h.finalize()))
    }
}
