//! TOML experiment configuration.
//!
//! ```toml
//! seed = 3
//! scenario = "C"
//! enable_stage2 = true
//!
//! [paths]
//! output = "runs/c3"
//! kg = "data/kg.tsv"            # or a [toybench] section instead of data paths
//! train = "data/train.jsonl"
//! test = "data/test.jsonl"
//! embeddings = "data/embeddings.txt"
//!
//! [linker_noise]
//! recall_entity = 0.6
//! recall_relation = 0.3
//! ```
//!
//! Relative paths resolve against the directory holding the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};
use silhouette_core::noise::{LinkerNoiseConfig, Scenario};
use silhouette_core::pipeline::{ExperimentConfig, Stage2Settings};
use silhouette_core::seq2seq::Seq2SeqConfig;
use silhouette_core::toybench::ToybenchSpec;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Toml { path: PathBuf, source: toml::de::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Accepts `a`/`A` and so on.
pub fn parse_scenario(s: &str) -> Option<Scenario> {
    match s.trim().to_ascii_uppercase().as_str() {
        "A" => Some(Scenario::A),
        "B" => Some(Scenario::B),
        "C" => Some(Scenario::C),
        _ => None,
    }
}

fn scenario_de<'de, D: Deserializer<'de>>(d: D) -> Result<Scenario, D::Error> {
    let s = String::deserialize(d)?;
    parse_scenario(&s).ok_or_else(|| serde::de::Error::custom(format!("unknown scenario {s:?}, expected A, B or C")))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub kg: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    /// Precomputed linker output (JSON lines of `{id, items}`).
    pub linker: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        for p in [&mut self.kg, &mut self.train, &mut self.val, &mut self.test, &mut self.embeddings, &mut self.linker, &mut self.output]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub recall_entity: f64,
    pub recall_relation: f64,
    #[serde(default)]
    pub spurious_rate: f64,
    #[serde(default)]
    pub wrong_link_rate: f64,
}

impl NoiseSection {
    pub fn to_config(self, seed: u64) -> LinkerNoiseConfig {
        LinkerNoiseConfig {
            recall_entity: self.recall_entity,
            recall_relation: self.recall_relation,
            spurious_rate: self.spurious_rate,
            wrong_link_rate: self.wrong_link_rate,
            seed,
        }
    }
}

fn yes() -> bool {
    true
}

fn default_seed() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Sets every module seed.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(deserialize_with = "scenario_de")]
    pub scenario: Scenario,
    #[serde(default = "yes")]
    pub enable_stage2: bool,
    #[serde(default = "yes")]
    pub enable_type_head: bool,
    #[serde(default)]
    pub paths: Paths,
    pub linker_noise: Option<NoiseSection>,
    #[serde(default)]
    pub seq2seq: Seq2SeqConfig,
    #[serde(default)]
    pub stage2: Stage2Settings,
    /// Generate the data in memory instead of reading it.
    pub toybench: Option<ToybenchSpec>,
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, toml::de::Error> {
        let mut cfg: PipelineConfig = toml::from_str(text)?;
        cfg.paths.resolve(base);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|source| ConfigError::Toml { path: path.into(), source })
    }

    /// Core experiment settings with all module seeds derived from `seed`.
    pub fn experiment(&self) -> ExperimentConfig {
        let noise = self.linker_noise.map(|n| n.to_config(self.seed)).unwrap_or_else(|| LinkerNoiseConfig::perfect(self.seed));
        let mut cfg = ExperimentConfig {
            scenario: self.scenario,
            linker: noise,
            seq2seq: self.seq2seq.clone(),
            stage2: self.stage2.clone(),
            enable_stage2: self.enable_stage2,
            enable_type_head: self.enable_type_head,
        };
        cfg.reseed(self.seed);
        cfg
    }

    /// Checks what a full pipeline run needs.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.paths.output.is_none() {
            return bad("paths.output is required".into());
        }
        if self.toybench.is_none() {
            for (name, p) in [("kg", &self.paths.kg), ("train", &self.paths.train), ("test", &self.paths.test), ("embeddings", &self.paths.embeddings)] {
                if p.is_none() {
                    return bad(format!("paths.{name} is required without a [toybench] section"));
                }
            }
        }
        if self.scenario != Scenario::A && self.paths.linker.is_none() && self.linker_noise.is_none() {
            return bad(format!("scenario {} needs paths.linker or a [linker_noise] section", self.scenario));
        }
        if let Some(n) = self.linker_noise {
            n.to_config(self.seed).validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        self.seq2seq.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }
}
