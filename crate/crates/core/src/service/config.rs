use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answerer::{AnswerBackend, AnswerError, NoisyBackend, RemoteBackend, ScriptedBackend};
use crate::catalog::synth::{generate_pool, SynthParams};
use crate::catalog::{load_catalog, CatalogError, DistanceBand};
use crate::embeddings::{load_embeddings, EmbeddingError};
use crate::engine::{Engine, GameAssets, GameConfig};
use crate::explain::{ExplainError, ExplanationMode, QuestionBank, Setting};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config {path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("catalog: {0}")]
    Catalog(#[from] CatalogError),
    #[error("embeddings: {0}")]
    Embeddings(#[from] EmbeddingError),
    #[error("question bank: {0}")]
    Bank(#[from] ExplainError),
    #[error("backend: {0}")]
    Backend(#[from] AnswerError),
    #[error("invalid value for {var}: {value:?}")]
    Env { var: &'static str, value: String },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    /// Answers from catalog annotations.
    #[default]
    Scripted,
    /// Scripted answers degraded by the noise wrapper.
    Noisy {
        accuracy: f64,
        coupling: f64,
        #[serde(default)]
        seed: u64,
    },
    /// An external VQA service speaking the wire protocol.
    Remote {
        url: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
}

fn default_timeout_ms() -> u64 {
    10_000
}

/// Service settings, read from a JSON file. Relative paths are resolved
/// against the file's directory. `EXAG_HOST`, `EXAG_PORT`, `EXAG_CATALOG`
/// and `EXAG_LOG_PATH` override the file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    /// Catalog directory or manifest. Absent means a synthetic pool.
    #[serde(default)]
    pub catalog: Option<PathBuf>,
    #[serde(default)]
    pub synthetic_images: Option<usize>,
    #[serde(default)]
    pub embeddings: Option<PathBuf>,
    #[serde(default)]
    pub question_bank: Option<PathBuf>,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default = "default_setting")]
    pub setting: Setting,
    #[serde(default)]
    pub p0: Option<u32>,
    #[serde(default)]
    pub n_images: Option<usize>,
    #[serde(default)]
    pub band: Option<DistanceBand>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub log_path: Option<PathBuf>,
    #[serde(default = "default_host")]
    pub host: String,
    #[serde(default = "default_port")]
    pub port: u16,
    #[serde(default = "default_blocks")]
    pub blocks: u32,
    #[serde(default = "default_games_per_block")]
    pub games_per_block: u32,
    /// Allowed UI origin; any origin when absent.
    #[serde(default)]
    pub cors_origin: Option<String>,
    /// Rotation of the first group in the round-robin assignment.
    #[serde(default)]
    pub group_offset: usize,
}

fn default_setting() -> Setting {
    Setting::B
}

fn default_host() -> String {
    "127.0.0.1".into()
}

fn default_port() -> u16 {
    8080
}

fn default_blocks() -> u32 {
    4
}

fn default_games_per_block() -> u32 {
    crate::engine::GAMES_PER_BLOCK
}

impl Default for ServiceConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p.as_mut() {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl ServiceConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let err = |message: String| ConfigError::File {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let mut cfg: ServiceConfig = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.catalog,
            &mut cfg.embeddings,
            &mut cfg.question_bank,
            &mut cfg.log_path,
        ] {
            resolve(base, p);
        }
        Ok(cfg)
    }

    /// Apply environment overrides through `lookup` (normally `std::env::var`).
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = lookup("EXAG_HOST") {
            self.host = v;
        }
        if let Some(v) = lookup("EXAG_PORT") {
            self.port = v.parse().map_err(|_| ConfigError::Env {
                var: "EXAG_PORT",
                value: v.clone(),
            })?;
        }
        if let Some(v) = lookup("EXAG_CATALOG") {
            self.catalog = Some(v.into());
        }
        if let Some(v) = lookup("EXAG_LOG_PATH") {
            self.log_path = Some(v.into());
        }
        Ok(())
    }

    pub fn build_assets(&self) -> Result<GameAssets, ConfigError> {
        let catalog = match &self.catalog {
            Some(p) => load_catalog(p)?,
            None => generate_pool(&SynthParams {
                n_images: self.synthetic_images.unwrap_or(SynthParams::default().n_images),
                seed: self.seed,
                ..Default::default()
            }),
        };
        let mut assets = GameAssets::from_catalog(catalog, self.seed);
        if let Some(p) = &self.embeddings {
            assets.embeddings = Arc::new(load_embeddings(p)?);
        }
        if let Some(p) = &self.question_bank {
            assets.bank = Arc::new(QuestionBank::load(p)?);
        }
        Ok(assets)
    }

    pub fn build_backend(&self, assets: &GameAssets) -> Result<Arc<dyn AnswerBackend>, ConfigError> {
        let scripted = || -> Arc<dyn AnswerBackend> { Arc::new(ScriptedBackend::new(assets.catalog.clone())) };
        Ok(match &self.backend {
            BackendConfig::Scripted => scripted(),
            BackendConfig::Noisy {
                accuracy,
                coupling,
                seed,
            } => Arc::new(NoisyBackend::new(scripted(), *accuracy, *coupling, *seed)?),
            BackendConfig::Remote { url, timeout_ms } => {
                Arc::new(RemoteBackend::new(url, Duration::from_millis(*timeout_ms))?)
            }
        })
    }

    pub fn build_engine(&self) -> Result<Engine, ConfigError> {
        let assets = self.build_assets()?;
        let backend = self.build_backend(&assets)?;
        Ok(Engine::new(assets, backend))
    }

    /// Game settings for one game under `mode`.
    pub fn game_config(&self, mode: ExplanationMode, seed: u64) -> GameConfig {
        let mut cfg = GameConfig::new(self.setting, mode, seed);
        if let Some(p0) = self.p0 {
            cfg = cfg.with_p0(p0);
        }
        if let Some(n) = self.n_images {
            cfg.n_images = n;
        }
        if let Some(b) = self.band {
            cfg.band = b;
        }
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_env() {
        let mut c = ServiceConfig::default();
        assert_eq!((c.setting, c.port, c.blocks), (Setting::B, 8080, 4));
        c.apply_env(|k| (k == "EXAG_PORT").then(|| "9000".to_string())).unwrap();
        assert_eq!(c.port, 9000);
        assert!(c.apply_env(|k| (k == "EXAG_PORT").then(|| "x".to_string())).is_err());
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exag.json");
        std::fs::write(
            &path,
            r#"{"catalog": "pool", "backend": {"kind": "noisy", "accuracy": 0.7, "coupling": 0.8}}"#,
        )
        .unwrap();
        let c = ServiceConfig::load(&path).unwrap();
        assert_eq!(c.catalog.unwrap(), dir.path().join("pool"));
        assert!(matches!(c.backend, BackendConfig::Noisy { .. }));
    }

    #[test]
    fn missing_catalog_is_an_error() {
        let c = ServiceConfig {
            catalog: Some("/nonexistent/pool".into()),
            ..Default::default()
        };
        assert!(matches!(c.build_engine(), Err(ConfigError::Catalog(_))));
    }
}
