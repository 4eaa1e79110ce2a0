//! Flat `key = value` run configuration.
//!
//! Values are resolved as defaults, then `HDRFEAT_DATA_ROOT`, then the config
//! file, then `--set key=value` flags. Every key of the model and training
//! settings lives at the top level:
//!
//! ```
//! use hdrfeat::cli::RunConfig;
//! let cfg = RunConfig::resolve(Some("epochs = 40\ncrop = 32"), &["crop=64".into()], None).unwrap();
//! assert_eq!((cfg.epochs, cfg.crop), (40, 64));
//! assert_eq!(cfg.model().depth, 3);
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::model::{AttentionMode, HdrFeatConfig};
use crate::train::TrainConfig;

pub const DATA_ROOT_ENV: &str = "HDRFEAT_DATA_ROOT";
pub const RESOLVED_CONFIG: &str = "resolved.cfg";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub depth: usize,
    pub attention: AttentionMode,
    pub widths: Vec<usize>,
    pub merged_width: usize,
    pub rfdb_count: usize,
    pub rfdb_distill_width: usize,
    pub share_attention_weights: bool,
    pub share_extractor_weights: bool,

    pub epochs: usize,
    pub lr_initial: f64,
    pub lr_reduced: f64,
    pub lr_switch_epoch: usize,
    pub crop: usize,
    pub batch: usize,
    pub seed: u64,
    pub mu: f64,
    pub gamma: f64,
    pub checkpoint_every: usize,
    pub augment: bool,

    pub data_root: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_parts(&HdrFeatConfig::default(), &TrainConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{location}: {message}")]
pub struct ConfigError {
    pub location: String,
    pub message: String,
}

impl RunConfig {
    pub fn from_parts(m: &HdrFeatConfig, t: &TrainConfig) -> Self {
        Self {
            depth: m.depth,
            attention: m.attention,
            widths: m.widths.clone(),
            merged_width: m.merged_width,
            rfdb_count: m.rfdb_count,
            rfdb_distill_width: m.rfdb_distill_width,
            share_attention_weights: m.share_attention_weights,
            share_extractor_weights: m.share_extractor_weights,
            epochs: t.epochs,
            lr_initial: t.lr_initial,
            lr_reduced: t.lr_reduced,
            lr_switch_epoch: t.lr_switch_epoch,
            crop: t.crop,
            batch: t.batch,
            seed: t.seed,
            mu: t.mu,
            gamma: t.gamma,
            checkpoint_every: t.checkpoint_every,
            augment: t.augment,
            data_root: None,
            out_dir: PathBuf::from("runs/default"),
            checkpoint: None,
        }
    }

    pub fn model(&self) -> HdrFeatConfig {
        HdrFeatConfig {
            depth: self.depth,
            attention: self.attention,
            widths: self.widths.clone(),
            merged_width: self.merged_width,
            rfdb_count: self.rfdb_count,
            rfdb_distill_width: self.rfdb_distill_width,
            share_attention_weights: self.share_attention_weights,
            share_extractor_weights: self.share_extractor_weights,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr_initial: self.lr_initial,
            lr_reduced: self.lr_reduced,
            lr_switch_epoch: self.lr_switch_epoch,
            crop: self.crop,
            batch: self.batch,
            seed: self.seed,
            mu: self.mu,
            gamma: self.gamma,
            checkpoint_every: self.checkpoint_every,
            augment: self.augment,
        }
    }

    /// Resolves `file_text` (named `file_name` in messages) and `--set`
    /// overrides on top of the defaults. The data root starts from
    /// `HDRFEAT_DATA_ROOT` when set.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = match file {
            Some(path) => Some(std::fs::read_to_string(path).map_err(|e| ConfigError {
                location: path.display().to_string(),
                message: e.to_string(),
            })?),
            None => None,
        };
        let name = file.map(|p| p.display().to_string());
        let env_root = std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from);
        let mut cfg = Self::resolve_named(text.as_deref(), name.as_deref(), overrides)?;
        if cfg.data_root.is_none() {
            cfg.data_root = env_root;
        }
        Ok(cfg)
    }

    /// [`load`](Self::load) without the file system and the environment.
    pub fn resolve(
        file_text: Option<&str>,
        overrides: &[String],
        data_root: Option<PathBuf>,
    ) -> Result<Self, ConfigError> {
        let mut cfg = Self::resolve_named(file_text, None, overrides)?;
        if cfg.data_root.is_none() {
            cfg.data_root = data_root;
        }
        Ok(cfg)
    }

    fn resolve_named(
        file_text: Option<&str>,
        file_name: Option<&str>,
        overrides: &[String],
    ) -> Result<Self, ConfigError> {
        let file_name = file_name.unwrap_or("config");
        let mut merged = Table::new();
        if let Some(text) = file_text {
            let table: Table = text.parse().map_err(|e: toml::de::Error| ConfigError {
                location: file_name.to_owned(),
                message: e.message().to_owned(),
            })?;
            for (key, value) in table {
                let location = match line_of(text, &key) {
                    Some(line) => format!("{file_name}:{line}"),
                    None => file_name.to_owned(),
                };
                check_entry(&key, &value, &location)?;
                merged.insert(key, value);
            }
        }
        for (i, flag) in overrides.iter().enumerate() {
            let location = format!("--set #{} `{flag}`", i + 1);
            let (key, raw) = flag.split_once('=').ok_or_else(|| ConfigError {
                location: location.clone(),
                message: "expected key=value".into(),
            })?;
            let key = key.trim();
            let value = parse_value(raw.trim());
            check_entry(key, &value, &location)?;
            merged.insert(key.to_owned(), value);
        }
        let cfg: RunConfig = Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError {
                location: file_name.to_owned(),
                message: e.message().to_owned(),
            })?;
        Ok(cfg)
    }

    /// Checks both halves; the message names the offending setting.
    pub fn validate(&self) -> Result<(), String> {
        self.model().validate().map_err(|e| e.to_string())?;
        self.train().validate().map_err(|e| e.to_string())
    }

    /// Serialized form; parses back to the same value.
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn write_resolved(&self, dir: &Path) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(RESOLVED_CONFIG);
        std::fs::write(&path, self.to_text())?;
        Ok(path)
    }
}

/// Override values are TOML literals; bare words fall back to strings so
/// that `attention=none` and `out_dir=runs/a` work unquoted.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_owned()))
}

/// Deserializes a single entry so that unknown keys and type errors are
/// reported against their own location.
fn check_entry(key: &str, value: &Value, location: &str) -> Result<(), ConfigError> {
    let mut single = Table::new();
    single.insert(key.to_owned(), value.clone());
    Value::Table(single)
        .try_into::<RunConfig>()
        .map(|_| ())
        .map_err(|e| ConfigError {
            location: location.to_owned(),
            message: format!("key `{key}`: {}", e.message()),
        })
}

fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines()
        .position(|l| {
            l.trim_start()
                .strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map(|i| i + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::resolve(Some(""), &[], None).unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_key_names_key_and_line() {
        let err = RunConfig::resolve(Some("epochs = 3\nlearning_rate = 1e-3\n"), &[], None).unwrap_err();
        assert_eq!(err.location, "config:2");
        assert!(err.message.contains("learning_rate"), "{err}");
    }

    #[test]
    fn type_error_names_key() {
        let err = RunConfig::resolve(None, &["crop=big".into()], None).unwrap_err();
        assert!(err.message.contains("`crop`"), "{err}");
        assert!(err.location.starts_with("--set"));
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.data_root = Some("data".into());
        cfg.attention = AttentionMode::Parallel;
        assert_eq!(RunConfig::resolve(Some(&cfg.to_text()), &[], None).unwrap(), cfg);
    }

    #[test]
    fn integers_accepted_for_reals() {
        let cfg = RunConfig::resolve(Some("mu = 100"), &["gamma=2".into()], None).unwrap();
        assert_eq!((cfg.mu, cfg.gamma), (100.0, 2.0));
    }
}
