//! Versioned JSON config files.
//!
//! Missing fields take their defaults, unknown fields are rejected, and
//! [`normalize`] re-serializes a parsed file with every field spelled out.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::error::ModelError;
use crate::model::ModelConfig;
use crate::train::{TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config syntax: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Config records that can check their own invariants.
pub trait Validated {
    fn check(&self) -> Result<(), ConfigError>;
}

impl Validated for ModelConfig {
    fn check(&self) -> Result<(), ConfigError> {
        Ok(self.validate()?)
    }
}

impl Validated for TrainConfig {
    fn check(&self) -> Result<(), ConfigError> {
        Ok(self.validate()?)
    }
}

/// Parses and validates a config. An empty document means all defaults.
pub fn parse_config<T: DeserializeOwned + Validated>(text: &str) -> Result<T, ConfigError> {
    let text = if text.trim().is_empty() { "{}" } else { text };
    let cfg: T = serde_json::from_str(text)?;
    cfg.check()?;
    Ok(cfg)
}

pub fn to_json<T: Serialize>(cfg: &T) -> String {
    let mut s = serde_json::to_string_pretty(cfg).expect("config serializes");
    s.push('\n');
    s
}

/// Canonical form of a config document: parse, then print every field.
pub fn normalize<T: DeserializeOwned + Serialize + Validated>(text: &str) -> Result<String, ConfigError> {
    Ok(to_json(&parse_config::<T>(text)?))
}

pub fn load_config<T: DeserializeOwned + Validated>(path: impl AsRef<Path>) -> Result<T, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::Combine;
    use crate::model::Architecture;

    #[test]
    fn empty_train_config_is_default_recipe() {
        assert_eq!(parse_config::<TrainConfig>("").unwrap(), TrainConfig::default());
        assert_eq!(parse_config::<TrainConfig>("{}").unwrap(), TrainConfig::default());
    }

    #[test]
    fn partial_model_config() {
        let cfg: ModelConfig = parse_config(r#"{"arch": "siren", "hidden": 32, "combine": ["add"]}"#).unwrap();
        assert_eq!(cfg.arch, Architecture::Siren);
        assert_eq!(cfg.hidden, 32);
        assert_eq!(cfg.combine, vec![Combine::Add]);
        assert_eq!(cfg.omega0, 40.0);
    }

    #[test]
    fn normalized_round_trip() {
        let text = r#"{"hidden": 16, "num_modules": 3}"#;
        let once = normalize::<ModelConfig>(text).unwrap();
        assert_eq!(normalize::<ModelConfig>(&once).unwrap(), once);
        let train = normalize::<TrainConfig>(r#"{"lr0": 0.01}"#).unwrap();
        assert_eq!(normalize::<TrainConfig>(&train).unwrap(), train);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(matches!(parse_config::<TrainConfig>(r#"{"lr": 1}"#), Err(ConfigError::Syntax(_))));
        assert!(matches!(parse_config::<TrainConfig>(r#"{"patience": 0}"#), Err(ConfigError::Train(_))));
        assert!(matches!(parse_config::<ModelConfig>(r#"{"hidden": 0}"#), Err(ConfigError::Model(_))));
        assert!(matches!(parse_config::<ModelConfig>(r#"{"schema_version": 2}"#), Err(ConfigError::Model(_))));
        assert!(matches!(parse_config::<ModelConfig>("[1,"), Err(ConfigError::Syntax(_))));
    }
}
