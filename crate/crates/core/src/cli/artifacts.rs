use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;

pub const ARTIFACTS_FILE: &str = "artifacts.json";

/// Every file a command wrote under the output directory, keyed by relative
/// path, with its SHA-256. Commands merge their entries into the existing
/// manifest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArtifactManifest {
    pub files: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl ArtifactManifest {
    pub fn load(output_dir: &Path) -> Result<Self, CliError> {
        let path = output_dir.join(ARTIFACTS_FILE);
        if !path.is_file() {
            return Ok(Self::default());
        }
        let text = fs::read_to_string(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
    }

    /// Hashes the given files (absolute or relative to `output_dir`), drops
    /// entries whose files are gone, and rewrites the manifest.
    pub fn record(output_dir: &Path, written: &[PathBuf]) -> Result<Self, CliError> {
        let mut manifest = Self::load(output_dir)?;
        for path in written {
            let rel = path.strip_prefix(output_dir).unwrap_or(path);
            let key = rel.to_string_lossy().replace('\\', "/");
            manifest.files.insert(key, sha256_file(&output_dir.join(rel))?);
        }
        manifest.files.retain(|k, _| output_dir.join(k).is_file());
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        let path = output_dir.join(ARTIFACTS_FILE);
        fs::write(&path, json).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        Ok(manifest)
    }
}

/// Creates parent directories and writes `contents`, returning the path.
pub fn write_file(path: PathBuf, contents: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    }
    fs::write(&path, contents).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_file(dir.path().join("x/a.txt"), "abc").unwrap();
        let m = ArtifactManifest::record(dir.path(), &[a]).unwrap();
        assert_eq!(m.files["x/a.txt"], "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(ArtifactManifest::load(dir.path()).unwrap(), m);
    }
}
