//! Provenance metadata and atomic file writes.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: Option<u64>,
    pub tool_version: String,
}

impl Provenance {
    pub fn new(config: &impl Serialize, seed: Option<u64>) -> Result<Self> {
        Ok(Self { config_hash: config_hash(config)?, seed, tool_version: env!("CARGO_PKG_VERSION").to_string() })
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed: Some(seed), ..self.clone() }
    }

    /// One-line `key=value` form used as a CSV comment.
    pub fn comment(&self) -> String {
        let seed = self.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        format!("config_hash={} seed={seed} version={}", self.config_hash, self.tool_version)
    }
}

/// SHA-256 of the compact JSON encoding.
pub fn config_hash(config: &impl Serialize) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// A JSON document carrying its provenance next to the payload fields.
#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    body: &'a T,
}

/// Writes to a temporary file in the target directory, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_json(path: &Path, body: &impl Serialize, provenance: &Provenance) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(&Document { provenance, body })?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Writes CSV produced by `fill`, preceded by a `# provenance` comment line.
pub fn write_csv(path: &Path, provenance: &Provenance, fill: impl FnOnce(&mut Vec<u8>) -> codesign_core::Result<()>) -> Result<()> {
    let mut buf = format!("# {}\n", provenance.comment()).into_bytes();
    fill(&mut buf)?;
    write_atomic(path, &buf)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = config_hash(&serde_json::json!({"x": 1})).unwrap();
        assert_eq!(a, config_hash(&serde_json::json!({"x": 1})).unwrap());
        assert_ne!(a, config_hash(&serde_json::json!({"x": 2})).unwrap());
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/out.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(std::fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn json_documents_carry_provenance() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("doc.json");
        let prov = Provenance::new(&"cfg", Some(4)).unwrap();
        write_json(&path, &serde_json::json!({"value": 3}), &prov).unwrap();
        let v: serde_json::Value = read_json(&path).unwrap();
        assert_eq!(v["value"], 3);
        assert_eq!(v["provenance"]["seed"], 4);
    }
}
