//! Layered configuration: command-line flags over a JSON file over defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub const DEFAULT_HOST: &str = "127.0.0.1";
pub const DEFAULT_PORT: u16 = 7870;
pub const DEFAULT_WS_PORT: u16 = 7871;
pub const DEFAULT_SILENCE_GAP_MS: u64 = 2000;
pub const DEFAULT_HISTORY_DEPTH: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Config {
    pub host: String,
    pub port: u16,
    pub ws_port: u16,
    pub bots_path: Option<PathBuf>,
    pub log_path: Option<PathBuf>,
    pub silence_gap_ms: u64,
    /// Overrides every bot script's seed when present.
    pub seed: Option<u64>,
    pub history_depth: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            host: DEFAULT_HOST.into(),
            port: DEFAULT_PORT,
            ws_port: DEFAULT_WS_PORT,
            bots_path: None,
            log_path: None,
            silence_gap_ms: DEFAULT_SILENCE_GAP_MS,
            seed: None,
            history_depth: DEFAULT_HISTORY_DEPTH,
        }
    }
}

/// One layer of settings; absent fields fall through to the layer below.
/// The config file and the flags both produce one of these.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    pub host: Option<String>,
    pub port: Option<u16>,
    pub ws_port: Option<u16>,
    pub bots_path: Option<PathBuf>,
    pub log_path: Option<PathBuf>,
    pub silence_gap_ms: Option<u64>,
    pub seed: Option<u64>,
    pub history_depth: Option<usize>,
}

impl Layer {
    /// Fields of `self` win over those of `below`.
    pub fn over(self, below: Layer) -> Layer {
        Layer {
            host: self.host.or(below.host),
            port: self.port.or(below.port),
            ws_port: self.ws_port.or(below.ws_port),
            bots_path: self.bots_path.or(below.bots_path),
            log_path: self.log_path.or(below.log_path),
            silence_gap_ms: self.silence_gap_ms.or(below.silence_gap_ms),
            seed: self.seed.or(below.seed),
            history_depth: self.history_depth.or(below.history_depth),
        }
    }

    pub fn resolve(self) -> Config {
        let d = Config::default();
        Config {
            host: self.host.unwrap_or(d.host),
            port: self.port.unwrap_or(d.port),
            ws_port: self.ws_port.unwrap_or(d.ws_port),
            bots_path: self.bots_path.or(d.bots_path),
            log_path: self.log_path.or(d.log_path),
            silence_gap_ms: self.silence_gap_ms.unwrap_or(d.silence_gap_ms),
            seed: self.seed.or(d.seed),
            history_depth: self.history_depth.unwrap_or(d.history_depth),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing config {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

pub fn load_layer(path: &Path) -> Result<Layer, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ConfigError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Flags over the optional file over defaults.
pub fn build(flags: Layer, file: Option<&Path>) -> Result<Config, ConfigError> {
    let file = file.map(load_layer).transpose()?.unwrap_or_default();
    Ok(flags.over(file).resolve())
}
