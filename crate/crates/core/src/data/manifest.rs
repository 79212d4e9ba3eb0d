//! Sample manifests: UTF-8 lines of `relativePath<TAB>label`, one record
//! per image, resolving under the manifest's directory.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub fn read_manifest(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (rel, label) = line.split_once('\t').ok_or_else(|| {
            Error::format(path, format!("line {}: missing tab separator", lineno + 1))
        })?;
        if label.is_empty() {
            return Err(Error::format(path, format!("line {}: empty label", lineno + 1)));
        }
        if rel.is_empty() {
            return Err(Error::format(path, format!("line {}: empty path", lineno + 1)));
        }
        entries.push((rel.to_string(), label.to_string()));
    }
    Ok(entries)
}

pub fn write_manifest(path: &Path, entries: &[(String, String)]) -> Result<()> {
    let mut text = String::new();
    for (rel, label) in entries {
        text.push_str(rel);
        text.push('\t');
        text.push_str(label);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
