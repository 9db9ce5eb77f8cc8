//! Tab-separated dataset manifests.
//!
//! Each data line is `first<TAB>second`: hazy/clean pairs for training
//! and evaluation, clean/depth pairs for synthesis. Paths are resolved
//! relative to the manifest file. Every referenced file must exist at
//! load time and first-column paths must be unique.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub first: PathBuf,
    pub second: PathBuf,
}

#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (number, line) in text.lines().enumerate() {
            let line_no = number + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t');
            let (Some(first), Some(second), None) =
                (fields.next(), fields.next(), fields.next())
            else {
                return Err(CliError::format(
                    path,
                    format!("line {line_no}: expected exactly two tab-separated paths"),
                ));
            };
            let first = base.join(first.trim());
            let second = base.join(second.trim());
            if !seen.insert(first.clone()) {
                return Err(CliError::format(
                    path,
                    format!("line {line_no}: duplicate entry {}", first.display()),
                ));
            }
            for p in [&first, &second] {
                if !p.is_file() {
                    return Err(CliError::Io(format!(
                        "{}: line {line_no}: no such file {}",
                        path.display(),
                        p.display()
                    )));
                }
            }
            entries.push(ManifestEntry { first, second });
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Write a manifest for files that are already in place.
pub fn write(path: &Path, rows: &[(PathBuf, PathBuf)]) -> Result<(), CliError> {
    let mut text = String::new();
    for (a, b) in rows {
        text.push_str(&format!("{}\t{}\n", a.display(), b.display()));
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
