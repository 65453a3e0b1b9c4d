//! Self-describing JSON container for trained models.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::network::TrainConfig;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelContainer<M> {
    pub format_version: u32,
    pub model_kind: String,
    pub seed: u64,
    pub train_config: Option<TrainConfig>,
    pub model: M,
}

impl<M: Serialize + DeserializeOwned> ModelContainer<M> {
    pub fn new(model_kind: &str, seed: u64, train_config: Option<TrainConfig>, model: M) -> Self {
        ModelContainer {
            format_version: FORMAT_VERSION,
            model_kind: model_kind.to_string(),
            seed,
            train_config,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string(self).map_err(|e| Error::Persist(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    /// Parses a container, rejecting unknown format versions and containers
    /// holding a different kind of model.
    pub fn from_json(raw: &str, expected_kind: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(raw).map_err(|e| Error::Persist(e.to_string()))?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(FORMAT_VERSION) => {}
            Some(v) => return Err(Error::Persist(format!("unsupported format_version {v}"))),
            None => return Err(Error::Persist("missing format_version".into())),
        }
        match value.get("model_kind").and_then(|v| v.as_str()) {
            Some(k) if k == expected_kind => {}
            Some(k) => {
                return Err(Error::Persist(format!(
                    "expected model_kind {expected_kind:?}, found {k:?}"
                )))
            }
            None => return Err(Error::Persist("missing model_kind".into())),
        }
        serde_json::from_value(value).map_err(|e| Error::Persist(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        crate::text::write_file(path, self.to_json()?)
    }

    pub fn load(path: impl AsRef<Path>, expected_kind: &str) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&raw, expected_kind)
    }
}
