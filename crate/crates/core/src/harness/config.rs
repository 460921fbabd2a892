use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::bagsim::MaterialKind;
use crate::policy::{PolicyConfig, PolicyKind};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{path}`: {msg}")]
    InvalidValue { path: String, msg: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// One experiment: which policies and materials to run and how often.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub policies: Vec<PolicyKind>,
    pub materials: Vec<MaterialKind>,
    pub n_trials: u32,
    #[serde(default = "default_n_objects")]
    pub n_objects: u32,
    #[serde(default)]
    pub base_seed: u64,
    /// Worker threads; 0 uses every available core.
    #[serde(default)]
    pub threads: usize,
    /// Dotted key path into the policy configuration, e.g. `slip.dh_minus`.
    #[serde(default)]
    pub overrides: BTreeMap<String, Value>,
}

fn default_n_objects() -> u32 {
    6
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Built-in experiments: `table1` (every policy on the four bags) and
    /// `ablation` (AutoBag with and without its second stage).
    pub fn builtin(name: &str) -> Option<Self> {
        let base = |policies: Vec<PolicyKind>, materials: Vec<MaterialKind>| Self {
            experiment: name.to_string(),
            policies,
            materials,
            n_trials: 500,
            n_objects: 6,
            base_seed: 0,
            threads: 0,
            overrides: BTreeMap::new(),
        };
        match name {
            "table1" => Some(base(PolicyKind::ALL.to_vec(), MaterialKind::BAGS.to_vec())),
            "ablation" => Some(base(
                vec![PolicyKind::AutoBag, PolicyKind::AutoBagD],
                vec![MaterialKind::ThinPlastic],
            )),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_trials == 0 {
            return Err(ConfigError::InvalidValue {
                path: "n_trials".into(),
                msg: "must be at least 1".into(),
            });
        }
        if self.policies.is_empty() {
            return Err(ConfigError::InvalidValue {
                path: "policies".into(),
                msg: "list is empty".into(),
            });
        }
        if self.materials.is_empty() {
            return Err(ConfigError::InvalidValue {
                path: "materials".into(),
                msg: "list is empty".into(),
            });
        }
        self.policy_config().map(|_| ())
    }

    /// Default policy configuration with `n_objects` and the overrides applied.
    pub fn policy_config(&self) -> Result<PolicyConfig, ConfigError> {
        let mut base = PolicyConfig {
            n_objects: self.n_objects,
            ..PolicyConfig::default()
        };
        if !self.overrides.is_empty() {
            base = apply_overrides(&base, &self.overrides)?;
        }
        base.validate().map_err(ConfigError::Invalid)?;
        Ok(base)
    }
}

/// Applies dotted-path overrides one at a time so that a rejected value is
/// reported against its own key.
pub fn apply_overrides(
    base: &PolicyConfig,
    overrides: &BTreeMap<String, Value>,
) -> Result<PolicyConfig, ConfigError> {
    let mut doc = serde_json::to_value(base)?;
    for (path, value) in overrides {
        set_path(&mut doc, path, value.clone())?;
        serde_json::from_value::<PolicyConfig>(doc.clone()).map_err(|e| {
            ConfigError::InvalidValue {
                path: path.clone(),
                msg: e.to_string(),
            }
        })?;
    }
    Ok(serde_json::from_value(doc)?)
}

/// Replaces the value at an existing dotted path; array elements are
/// addressed by index.
pub fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<(), ConfigError> {
    let unknown = || ConfigError::UnknownKey(path.to_string());
    if path.is_empty() {
        return Err(unknown());
    }
    let mut cur = doc;
    for seg in path.split('.') {
        cur = match cur {
            Value::Object(map) => map.get_mut(seg).ok_or_else(unknown)?,
            Value::Array(items) => {
                let idx: usize = seg.parse().map_err(|_| unknown())?;
                items.get_mut(idx).ok_or_else(unknown)?
            }
            _ => return Err(unknown()),
        };
    }
    *cur = value;
    Ok(())
}
