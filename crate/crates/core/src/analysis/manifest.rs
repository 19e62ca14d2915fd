use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AnalysisError, Result};

pub const MANIFEST_FILE: &str = "manifest.toml";

/// Record of one command invocation, written next to its outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub deterministic: bool,
    /// SHA-256 over the input files (see [`hash_inputs`]).
    pub input_hash: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// Effective configuration, as TOML.
    pub config: String,
}

impl RunManifest {
    /// Writes `dir/manifest.toml`, replacing any previous manifest.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(MANIFEST_FILE);
        let text = toml::to_string(self).map_err(|e| AnalysisError::Invalid(format!("manifest: {e}")))?;
        fs::write(&path, text)?;
        Ok(path)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        toml::from_str(&text).map_err(|e| AnalysisError::Format {
            offset: e.span().map_or(0, |s| s.start),
            message: e.message().to_string(),
        })
    }
}

fn collect(path: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
        entries.sort();
        for e in entries {
            if e.file_name().is_some_and(|n| n != MANIFEST_FILE) {
                collect(&e, out)?;
            }
        }
    } else {
        out.push(path.to_path_buf());
    }
    Ok(())
}

/// Hex SHA-256 over every input file in sorted order (directories are
/// walked, manifests skipped). Each file contributes its path relative to
/// its input root, its length and its bytes, so renames change the hash.
pub fn hash_inputs(paths: &[&Path]) -> Result<String> {
    let mut h = Sha256::new();
    for root in paths {
        let mut files = Vec::new();
        collect(root, &mut files)?;
        for f in files {
            let rel = f.strip_prefix(root).unwrap_or(&f);
            let name = rel.to_string_lossy();
            let bytes = fs::read(&f)?;
            h.update((name.len() as u64).to_le_bytes());
            h.update(name.as_bytes());
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(&bytes);
        }
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}
