//! Run configuration files (TOML) with per-architecture defaults.
//!
//! ```toml
//! [data]
//! path = "ml-100k"
//! format = "movielens"
//! split = "u1"
//!
//! [model]
//! architecture = "fea"
//! encoder = [32, 32, 16]
//!
//! [train]
//! epochs = 200
//! optimizer = { kind = "adam", lr = 0.001, beta1 = 0.9, beta2 = 0.999, eps = 1e-8 }
//! ```
//!
//! Keys missing from `[model]` take the defaults of the chosen architecture;
//! keys missing from `[train]` take [`TrainConfig::default`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::models::{Architecture, ModelConfig};
use crate::training::TrainConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    pub format: Option<String>,
    pub split: Option<String>,
    pub scale: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataSection,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    data: DataSection,
    #[serde(default)]
    model: toml::Table,
    #[serde(default)]
    train: toml::Table,
    out: Option<PathBuf>,
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("config: {e}"))
}

/// Overlays `overrides` on the serialized `base`, then deserializes.
fn overlay<T: Serialize + for<'de> Deserialize<'de>>(base: &T, overrides: &toml::Table) -> Result<T> {
    let mut table = toml::Table::try_from(base).map_err(config_err)?;
    for (k, v) in overrides {
        table.insert(k.clone(), v.clone());
    }
    T::deserialize(toml::Value::Table(table)).map_err(config_err)
}

impl RunConfig {
    /// Parses a config; `arch` and `levels` pick the model defaults when the
    /// file does not name an architecture.
    pub fn from_toml_str(text: &str, arch: Option<Architecture>, levels: usize) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(config_err)?;
        let file_arch = match raw.model.get("architecture") {
            Some(v) => Some(
                v.as_str()
                    .ok_or_else(|| config_err("model.architecture must be a string"))?
                    .parse::<Architecture>()?,
            ),
            None => None,
        };
        let arch = arch.or(file_arch).unwrap_or(Architecture::SelfSupervised);
        let mut model_overrides = raw.model.clone();
        model_overrides.remove("architecture");
        let levels = match raw.model.get("levels") {
            Some(v) => v.as_integer().ok_or_else(|| config_err("model.levels must be an integer"))? as usize,
            None => levels,
        };
        let model = overlay(&ModelConfig::for_architecture(arch, levels), &model_overrides)?;
        model.validate()?;
        let train: TrainConfig = overlay(&TrainConfig::default(), &raw.train)?;
        train.validate()?;
        Ok(Self {
            data: raw.data,
            model,
            train,
            out: raw.out,
        })
    }

    pub fn load(path: &Path, arch: Option<Architecture>, levels: usize) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?, arch, levels)
    }

    pub fn defaults(arch: Architecture, levels: usize) -> Self {
        Self {
            data: DataSection::default(),
            model: ModelConfig::for_architecture(arch, levels),
            train: TrainConfig::default(),
            out: None,
        }
    }
}
