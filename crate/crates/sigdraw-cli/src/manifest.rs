//! Run manifest: every subcommand leaves a `manifest.json` in its output
//! directory recording the resolved configuration, a hash of it, the
//! artifacts written, and any headline results. Contains nothing
//! time-dependent, so identical runs write identical manifests.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};
use sigdraw::{Error, Result};

pub struct Manifest {
    pub command: &'static str,
    pub config: BTreeMap<String, String>,
    pub artifacts: Vec<String>,
    pub results: BTreeMap<String, String>,
}

/// Hex SHA-256 of the canonical `key=value` listing of a resolved config.
pub fn config_hash(config: &BTreeMap<String, String>) -> String {
    let mut hasher = Sha256::new();
    for (k, v) in config {
        hasher.update(k.as_bytes());
        hasher.update(b"=");
        hasher.update(v.as_bytes());
        hasher.update(b"\n");
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_manifest(out_dir: &Path, manifest: &Manifest) -> Result<()> {
    let mut artifacts = manifest.artifacts.clone();
    artifacts.sort();
    let doc = serde_json::json!({
        "command": manifest.command,
        "config_sha256": config_hash(&manifest.config),
        "config": manifest.config,
        "artifacts": artifacts,
        "results": manifest.results,
    });
    let mut file = std::fs::File::create(out_dir.join("manifest.json"))?;
    let text = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::invalid(format!("manifest serialization: {e}")))?;
    writeln!(file, "{text}")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_depends_on_content_not_insertion_order() {
        let mut a = BTreeMap::new();
        a.insert("tau".to_string(), "20".to_string());
        a.insert("seed".to_string(), "42".to_string());
        let mut b = BTreeMap::new();
        b.insert("seed".to_string(), "42".to_string());
        b.insert("tau".to_string(), "20".to_string());
        assert_eq!(config_hash(&a), config_hash(&b));
        b.insert("tau".to_string(), "21".to_string());
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }
}
