//! Directory listing and stem-based pairing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hetfuse::imgcore::{io, to_grayscale};
use hetfuse::Image;

pub const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg"];

/// Files directly inside `dir` whose extension is in `exts`, keyed by stem.
pub fn list_by_stem(dir: &Path, exts: &[&str]) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    let entries = std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))?;
    for entry in entries {
        let path = entry?.path();
        if !path.is_file() {
            continue;
        }
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if !ext.is_some_and(|e| exts.contains(&e.as_str())) {
            continue;
        }
        let Some(stem) = path
            .file_stem()
            .and_then(|s| s.to_str())
            .map(str::to_string)
        else {
            continue;
        };
        if let Some(prev) = out.insert(stem.clone(), path.clone()) {
            bail!(
                "stem `{stem}` is ambiguous: {} and {}",
                prev.display(),
                path.display()
            );
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pair {
    pub stem: String,
    pub thermal: PathBuf,
    pub visual: PathBuf,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Pairing {
    pub pairs: Vec<Pair>,
    pub thermal_only: Vec<String>,
    pub visual_only: Vec<String>,
}

pub fn pair_dirs(thermal_dir: &Path, visual_dir: &Path) -> Result<Pairing> {
    let mut t = list_by_stem(thermal_dir, IMAGE_EXTENSIONS)?;
    let v = list_by_stem(visual_dir, IMAGE_EXTENSIONS)?;
    let mut p = Pairing::default();
    for (stem, visual) in v {
        match t.remove(&stem) {
            Some(thermal) => p.pairs.push(Pair {
                stem,
                thermal,
                visual,
            }),
            None => p.visual_only.push(stem),
        }
    }
    p.thermal_only = t.into_keys().collect();
    Ok(p)
}

/// Loads a frame as a single channel, converting colour input to luminance.
pub fn load_gray(path: &Path) -> Result<Image> {
    let img = io::load(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(match img.channels() {
        1 => img,
        _ => to_grayscale(&img)?,
    })
}

pub fn load_any(path: &Path) -> Result<Image> {
    io::load(path).with_context(|| format!("loading {}", path.display()))
}
