//! Content digests and the per-workspace stage manifest.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{json_err, Result};

pub const MANIFEST: &str = "manifest.json";

pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| netra_core::Error::io(path, e))?;
    Ok(digest_bytes(&bytes))
}

/// Digest of a value's canonical JSON form (struct fields in declaration
/// order, maps sorted).
pub fn digest_json<T: Serialize>(value: &T) -> String {
    digest_bytes(
        serde_json::to_string(value)
            .expect("serializable")
            .as_bytes(),
    )
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config_digest: String,
    /// Artifact name → digest, for everything the stage read.
    pub inputs: BTreeMap<String, String>,
    /// Workspace-relative path → digest, for everything it wrote.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    pub fn load(workspace: &Path) -> Result<Manifest> {
        let path = workspace.join(MANIFEST);
        if !path.exists() {
            return Ok(Manifest::default());
        }
        let text = std::fs::read_to_string(&path).map_err(|e| netra_core::Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| json_err(&path, e))
    }

    pub fn save(&self, workspace: &Path) -> Result<()> {
        let path = workspace.join(MANIFEST);
        let text = serde_json::to_string_pretty(self).expect("serializable") + "\n";
        std::fs::write(&path, text).map_err(|e| netra_core::Error::io(&path, e))?;
        Ok(())
    }
}
