//! Stage cache. Each stage records a key (hash of its input files, its
//! settings and the tool version) and the hashes of the files it wrote. A
//! rerun is skipped only when the key matches and every output is still
//! byte-identical to what was recorded.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    Ok(hash_bytes(&bytes))
}

/// Incrementally built stage key.
#[derive(Debug, Clone)]
pub struct StageKey {
    hasher: Sha256,
}

impl StageKey {
    pub fn new(stage: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(env!("CARGO_PKG_VERSION").as_bytes());
        hasher.update([0]);
        hasher.update(stage.as_bytes());
        hasher.update([0]);
        Self { hasher }
    }

    pub fn file(mut self, path: &Path) -> Result<Self> {
        self.hasher.update(hash_file(path)?.as_bytes());
        self.hasher.update([0]);
        Ok(self)
    }

    pub fn param<T: Serialize>(mut self, value: &T) -> Self {
        let json = serde_json::to_string(value).expect("settings serialize");
        self.hasher.update(json.as_bytes());
        self.hasher.update([0]);
        self
    }

    pub fn finish(self) -> String {
        hex::encode(self.hasher.finalize())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    key: String,
    outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct StageCache {
    dir: PathBuf,
}

impl StageCache {
    pub fn new(workdir: &Path) -> Self {
        Self {
            dir: workdir.join(".cache"),
        }
    }

    fn manifest_path(&self, stage: &str) -> PathBuf {
        self.dir.join(format!("{stage}.json"))
    }

    /// True when `stage` last ran with `key` and its outputs are unchanged.
    pub fn is_fresh(&self, stage: &str, key: &str, outputs: &[PathBuf]) -> bool {
        let Ok(text) = fs::read_to_string(self.manifest_path(stage)) else {
            return false;
        };
        let Ok(m) = serde_json::from_str::<Manifest>(&text) else {
            return false;
        };
        if m.key != key || m.outputs.len() != outputs.len() {
            return false;
        }
        outputs.iter().all(|p| {
            let recorded = m.outputs.get(&p.display().to_string());
            matches!((recorded, hash_file(p)), (Some(r), Ok(h)) if *r == h)
        })
    }

    pub fn record(&self, stage: &str, key: &str, outputs: &[PathBuf]) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        let mut map = BTreeMap::new();
        for p in outputs {
            map.insert(p.display().to_string(), hash_file(p)?);
        }
        let m = Manifest {
            key: key.to_owned(),
            outputs: map,
        };
        fs::write(self.manifest_path(stage), serde_json::to_string_pretty(&m)?)?;
        Ok(())
    }
}
