//! File plumbing: model loading and atomic writes.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use emp_core::{GraphTopology, ModelFile, PotentialVector};

/// Reads and validates a model JSON file.
pub fn load_model(path: &Path) -> Result<(GraphTopology, PotentialVector)> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read model file {}", path.display()))?;
    let file: ModelFile = serde_json::from_str(&text)
        .with_context(|| format!("{} is not a valid model file", path.display()))?;
    file.into_model()
        .with_context(|| format!("{} failed validation", path.display()))
}

/// Writes `contents` to `path` atomically: a sibling temp file is written in
/// full, then renamed over the target, so readers never observe a torn file.
pub fn atomic_write(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    }
    let file_name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("output");
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    fs::write(&tmp, contents)
        .with_context(|| format!("cannot write temporary file {}", tmp.display()))?;
    fs::rename(&tmp, path)
        .with_context(|| format!("cannot move {} into place", path.display()))?;
    Ok(())
}
