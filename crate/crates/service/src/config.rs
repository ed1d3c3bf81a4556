//! Service configuration: a TOML file plus `MVRS_*` environment overrides.
//!
//! Nested keys are joined with a double underscore, so
//! `MVRS_EMBEDDER__DIM=256` overrides `[embedder] dim`. Override values are
//! read as TOML scalars when they parse as one and as strings otherwise.

use std::path::{Path, PathBuf};

use mvrs_core::refseg::{LossWeights, DEFAULT_CHUNK};
use mvrs_core::{AnnParams, EmbedderConfig, PreprocessConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENV_PREFIX: &str = "MVRS_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config value: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchKind {
    #[default]
    Exact,
    Ann,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    pub data_dir: PathBuf,
    /// Defaults to `<data_dir>/index.mvrs`.
    pub index_path: Option<PathBuf>,
    /// Keep uploaded frames so explain requests can run later.
    pub retain_frames: bool,
    pub chunk_size: usize,
    pub max_upload_bytes: usize,
    /// `["*"]` allows any origin; empty disables CORS headers.
    pub cors_allowed_origins: Vec<String>,
    pub search: SearchKind,
    pub ann: AnnParams,
    pub embedder: EmbedderConfig,
    pub preprocess: PreprocessConfig,
    pub loss: LossWeights,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("data"),
            index_path: None,
            retain_frames: true,
            chunk_size: DEFAULT_CHUNK,
            max_upload_bytes: 1 << 30,
            cors_allowed_origins: Vec::new(),
            search: SearchKind::Exact,
            ann: AnnParams::default(),
            embedder: EmbedderConfig::default(),
            preprocess: PreprocessConfig::default(),
            loss: LossWeights::default(),
        }
    }
}

impl ServiceConfig {
    pub fn index_path(&self) -> PathBuf {
        self.index_path
            .clone()
            .unwrap_or_else(|| self.data_dir.join("index.mvrs"))
    }

    /// Reads `path` and applies overrides from the process environment.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text, std::env::vars())
    }

    pub fn from_toml_str(
        text: &str,
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, ConfigError> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for (key, value) in env {
            if let Some(rest) = key.strip_prefix(ENV_PREFIX) {
                apply_override(&mut table, rest, &value)?;
            }
        }
        // Re-parse from text so type errors point at the offending key.
        let merged = toml::to_string(&table).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let cfg: Self = toml::from_str(&merged).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(1..=DEFAULT_CHUNK).contains(&self.chunk_size) {
            return Err(ConfigError::Invalid(format!(
                "chunk_size must be in 1..={DEFAULT_CHUNK}, got {}",
                self.chunk_size
            )));
        }
        self.embedder
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("embedder: {e}")))?;
        self.preprocess
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("preprocess: {e}")))?;
        self.loss
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("loss: {e}")))?;
        if self.ann.graph_degree < 2 || self.ann.ef_search == 0 {
            return Err(ConfigError::Invalid(
                "ann.graph_degree must be >= 2 and ann.ef_search >= 1".into(),
            ));
        }
        Ok(())
    }
}

fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<(), ConfigError> {
    let path: Vec<String> = key.split("__").map(str::to_ascii_lowercase).collect();
    if path.iter().any(String::is_empty) {
        return Err(ConfigError::Parse(format!(
            "malformed override variable {ENV_PREFIX}{key}"
        )));
    }
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()));

    let (last, parents) = path.split_last().expect("non-empty split");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| {
            ConfigError::Parse(format!("{ENV_PREFIX}{key}: `{p}` is not a table"))
        })?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}
