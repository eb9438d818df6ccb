//! Evaluation-time degradation of an image tree.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hetfuse::evalbench::{degrade, DegradeKind};
use hetfuse::imgcore::io;
use walkdir::WalkDir;

use crate::pairs::IMAGE_EXTENSIONS;

/// Degrades every image under `in_dir`, writing PNGs at the same relative
/// paths under `out_dir`. Returns the written paths in walk order.
pub fn cmd_degrade(in_dir: &Path, kind: DegradeKind, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for entry in WalkDir::new(in_dir).sort_by_file_name() {
        let entry = entry?;
        let path = entry.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if !entry.file_type().is_file() || !is_image {
            continue;
        }
        let rel = path.strip_prefix(in_dir)?;
        let dst = out_dir.join(rel).with_extension("png");
        if let Some(parent) = dst.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let img = io::load(path).with_context(|| format!("loading {}", path.display()))?;
        io::save_png(&degrade(&img, kind)?, &dst)?;
        written.push(dst);
    }
    Ok(written)
}
