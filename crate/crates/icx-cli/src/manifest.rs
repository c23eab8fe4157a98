//! Artifact manifest: one `sha256  relative-path` line per produced file,
//! sorted by path, so a whole pipeline run can be compared with a single
//! file diff.

use std::fs;
use std::path::{Path, PathBuf};

use icx_core::error::{Error, Result};
use sha2::{Digest, Sha256};

#[derive(Debug, Default)]
pub struct Manifest {
    entries: Vec<(String, PathBuf)>,
}

impl Manifest {
    pub fn new() -> Self {
        Manifest::default()
    }

    /// Hashes a produced file and records it under its name relative to the
    /// output directory.
    pub fn record(&mut self, out_dir: &Path, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        let digest = hasher.finalize();
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        let rel = path.strip_prefix(out_dir).unwrap_or(path).to_path_buf();
        self.entries.push((hex, rel));
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut entries = self.entries.clone();
        entries.sort_by(|a, b| a.1.cmp(&b.1));
        let mut out = String::new();
        for (hash, path) in &entries {
            out.push_str(&format!("{hash}  {}\n", path.display()));
        }
        out
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join("manifest.txt");
        fs::write(&path, self.to_text()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
