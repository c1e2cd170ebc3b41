//! Deployment configuration, read from a TOML file. Every field is optional
//! and falls back to its default.

use std::path::Path;

use serde::{Deserialize, Serialize};

use opfactor_core::decision::DecisionConfig;
use opfactor_core::enrollment::DEFAULT_MAX_REFS;
use opfactor_core::vision::{DEFAULT_BINS_PER_CHANNEL, MAX_BINS_PER_CHANNEL, MIN_BINS_PER_CHANNEL};
use opfactor_core::{Aggregation, Factor, FrameParams, Policy, Thresholds};

pub const DEFAULT_BIND: &str = "127.0.0.1:7878";
pub const DEFAULT_MAX_CONNECTIONS: usize = 16;
pub const DEFAULT_MAX_REQUEST_BYTES: usize = 16 * 1024 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub bind: String,
    pub max_connections: usize,
    pub max_request_bytes: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            bind: DEFAULT_BIND.to_string(),
            max_connections: DEFAULT_MAX_CONNECTIONS,
            max_request_bytes: DEFAULT_MAX_REQUEST_BYTES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub max_refs: usize,
    pub histogram_bins: usize,
    pub aggregation: Aggregation,
    pub thresholds: Thresholds,
    pub policy: Policy,
    pub audio: FrameParams,
    pub server: ServerConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            max_refs: DEFAULT_MAX_REFS,
            histogram_bins: DEFAULT_BINS_PER_CHANNEL,
            aggregation: Aggregation::Mean,
            thresholds: Thresholds::default(),
            policy: Policy::default(),
            audio: FrameParams::default(),
            server: ServerConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Loads `path` if given, otherwise the defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self, ConfigError> {
        path.map_or_else(|| Ok(Config::default()), Config::load)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.thresholds.validate().map_err(|e| invalid(&e))?;
        self.policy.validate().map_err(|e| invalid(&e))?;
        if self.policy.k.is_some_and(|k| k > Factor::ALL.len()) {
            return Err(ConfigError::Invalid(format!(
                "policy k must be at most {}",
                Factor::ALL.len()
            )));
        }
        self.audio.validate().map_err(|e| invalid(&e))?;
        if self.max_refs == 0 {
            return Err(ConfigError::Invalid("max_refs must be at least 1".into()));
        }
        if !(MIN_BINS_PER_CHANNEL..=MAX_BINS_PER_CHANNEL).contains(&self.histogram_bins) {
            return Err(ConfigError::Invalid(format!(
                "histogram_bins must be in {MIN_BINS_PER_CHANNEL}..={MAX_BINS_PER_CHANNEL}"
            )));
        }
        if self.server.max_connections == 0 || self.server.max_request_bytes == 0 {
            return Err(ConfigError::Invalid("server limits must be positive".into()));
        }
        Ok(())
    }

    pub fn decision(&self) -> DecisionConfig {
        DecisionConfig {
            thresholds: self.thresholds,
            policy: self.policy,
            aggregation: self.aggregation,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use opfactor_core::{PolicyKind, Window};

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = Config::from_toml("").unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.thresholds.audio_max_distance, 100.0);
        assert_eq!(cfg.thresholds.visual_max_distance, 0.2);
        assert_eq!(cfg.policy.kind, PolicyKind::RfidPlusAny);
        assert_eq!(cfg.max_refs, 10);
        assert_eq!(cfg.histogram_bins, 8);
        assert_eq!(cfg.audio.frame_size, 2048);
        assert_eq!(cfg.audio.hop_size, 512);
        assert_eq!(cfg.audio.window, Window::Hann);
        assert_eq!(cfg.server.max_connections, 16);
        assert_eq!(cfg.server.max_request_bytes, 16 << 20);
    }

    #[test]
    fn partial_overrides() {
        let cfg = Config::from_toml(
            r#"
            aggregation = "min"
            [thresholds]
            visual_max_distance = 0.3
            [policy]
            kind = "k_of_n"
            k = 2
            [audio]
            window = "rectangular"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.thresholds.audio_max_distance, 100.0);
        assert_eq!(cfg.thresholds.visual_max_distance, 0.3);
        assert_eq!(cfg.policy, Policy::k_of_n(2));
        assert_eq!(cfg.aggregation, Aggregation::Min);
        assert_eq!(cfg.audio.frame_size, 2048);
        assert_eq!(cfg.audio.window, Window::Rectangular);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = Config::default();
        assert_eq!(Config::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn rejects_invalid_values() {
        assert!(Config::from_toml("[thresholds]\naudio_max_distance = -1.0").is_err());
        assert!(Config::from_toml("[policy]\nkind = \"k_of_n\"").is_err());
        assert!(Config::from_toml("[policy]\nkind = \"k_of_n\"\nk = 4").is_err());
        assert!(Config::from_toml("[policy]\nkind = \"k_of_n\"\nk = 3").is_ok());
        assert!(Config::from_toml("histogram_bins = 1").is_err());
        assert!(Config::from_toml("max_refs = 0").is_err());
        assert!(Config::from_toml("[audio]\nframe_size = 1000").is_err());
        assert!(Config::from_toml("bogus = 1").is_err());
    }
}
