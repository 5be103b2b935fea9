//! Single-model checkpoints: a JSON document holding the spec (including the
//! variance floor), the parameters as decimal floats and a format version.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{NetworkParams, NetworkSpec};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub spec: NetworkSpec,
    pub params: NetworkParams,
    /// Digest of the run configuration that produced the checkpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
}

impl Checkpoint {
    pub fn new(spec: NetworkSpec, params: NetworkParams) -> Result<Self> {
        spec.validate()?;
        params.check_shapes(&spec)?;
        Ok(Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            spec,
            params,
            config_digest: None,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ck.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {} (expected {CHECKPOINT_FORMAT_VERSION})",
                ck.format_version
            )));
        }
        ck.spec.validate()?;
        ck.params.check_shapes(&ck.spec)?;
        if !ck.params.is_finite() {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
