//! Stage manifest: which stages finished and the checksums of what they
//! wrote, so a run can be resumed without redoing or trusting stale work.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::jsonl::write_atomic;
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageRecord {
    pub name: String,
    /// File name to lowercase hex sha256.
    pub outputs: BTreeMap<String, String>,
    pub counts: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub config_sha256: String,
    pub stages: Vec<StageRecord>,
    pub complete: bool,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn corrupted(dir: &Path, why: String) -> Error {
    Error::Manifest(format!(
        "{} is corrupted ({why}); delete the artifact directory and start a fresh run",
        dir.join(MANIFEST_FILE).display()
    ))
}

impl Manifest {
    pub fn new(config_sha256: String) -> Self {
        Manifest {
            version: MANIFEST_VERSION,
            config_sha256,
            stages: Vec::new(),
            complete: false,
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.is_file() {
            return Err(Error::Manifest(format!(
                "no {MANIFEST_FILE} in {}; nothing to resume (start a run with `pipeline --config`)",
                dir.display()
            )));
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| corrupted(dir, e.to_string()))?;
        if manifest.version != MANIFEST_VERSION {
            return Err(corrupted(dir, format!("unsupported version {}", manifest.version)));
        }
        Ok(manifest)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("manifest serializes");
        bytes.push(b'\n');
        write_atomic(&dir.join(MANIFEST_FILE), &bytes)
    }

    pub fn is_done(&self, stage: &str) -> bool {
        self.stages.iter().any(|s| s.name == stage)
    }

    pub fn stage(&self, stage: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == stage)
    }

    /// Checks that every recorded output still has its recorded checksum.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for stage in &self.stages {
            for (file, want) in &stage.outputs {
                let path = dir.join(file);
                if !path.is_file() {
                    return Err(corrupted(dir, format!("{file} from stage {} is missing", stage.name)));
                }
                let got = file_sha256(&path)?;
                if &got != want {
                    return Err(corrupted(dir, format!("{file} from stage {} was modified", stage.name)));
                }
            }
        }
        Ok(())
    }

    pub fn total(&self, count: &str) -> u64 {
        self.stages.iter().filter_map(|s| s.counts.get(count)).sum()
    }
}
