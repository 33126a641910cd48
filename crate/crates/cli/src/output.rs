//! Output directory with a manifest of every file written into it.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// File name (relative to the output directory) to its producer.
    pub files: BTreeMap<String, FileEntry>,
    /// Wall-clock seconds of the latest run of each subcommand.
    pub timings: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub subcommand: String,
    pub bytes: u64,
}

pub struct OutputDir {
    root: PathBuf,
    pub manifest: Manifest,
}

impl OutputDir {
    /// Create the directory if needed and load an existing manifest.
    pub fn open(root: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("cannot create {}", root.display()))?;
        let path = root.join(MANIFEST);
        let manifest = if path.exists() {
            let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("malformed {}", path.display()))?
        } else {
            Manifest::default()
        };
        Ok(Self { root: root.to_path_buf(), manifest })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &str, subcommand: &str) -> anyhow::Result<()> {
        let path = self.root.join(name);
        fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        self.manifest.files.insert(
            name.to_string(),
            FileEntry {
                subcommand: subcommand.to_string(),
                bytes: contents.len() as u64,
            },
        );
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T, subcommand: &str) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text, subcommand)
    }

    pub fn save(&mut self, subcommand: &str, seconds: f64) -> anyhow::Result<()> {
        self.manifest.timings.insert(subcommand.to_string(), seconds);
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        let path = self.root.join(MANIFEST);
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
    }

    /// Manifest entries whose file is no longer on disk.
    pub fn missing_files(&self) -> Vec<String> {
        self.manifest
            .files
            .keys()
            .filter(|name| !self.root.join(name).is_file())
            .cloned()
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::open(dir.path()).unwrap();
        out.write("a.csv", "x\n1\n", "simulate").unwrap();
        out.save("simulate", 0.5).unwrap();
        let again = OutputDir::open(dir.path()).unwrap();
        assert_eq!(again.manifest, out.manifest);
        assert_eq!(again.manifest.files["a.csv"].bytes, 4);
        assert!(again.missing_files().is_empty());
        fs::remove_file(dir.path().join("a.csv")).unwrap();
        assert_eq!(again.missing_files(), vec!["a.csv".to_string()]);
    }
}
