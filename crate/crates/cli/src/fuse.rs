//! Batch fusion over paired directories.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use hetfuse::baselines::{fuse_baseline, BaselineMethod};
use hetfuse::imgcore::io;
use hetfuse::rgif::rgif_fuse;
use hetfuse::rgmaf::rgmaf_fuse;
use hetfuse::Image;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::pairs::{load_any, load_gray, pair_dirs, Pair};

pub const MANIFEST_TXT: &str = "manifest.txt";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const TIMINGS_TXT: &str = "timings.txt";
pub const TIMINGS_JSON: &str = "timings.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FuseMethod {
    Rgif,
    Rgmaf,
    Baseline(BaselineMethod),
}

impl FuseMethod {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Rgif => "rgif",
            Self::Rgmaf => "rgmaf",
            Self::Baseline(b) => b.name(),
        }
    }
}

impl FromStr for FuseMethod {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rgif" => Ok(Self::Rgif),
            "rgmaf" => Ok(Self::Rgmaf),
            other => BaselineMethod::from_str(other)
                .map(Self::Baseline)
                .map_err(|_| anyhow!("unknown method `{other}`; expected rgif, rgmaf, alpha, weighted, overlay, laplacian, wavelet, guided or ycrcb")),
        }
    }
}

pub struct Fused {
    pub image: Image,
    pub used_fallback: bool,
    /// Named maps in `[0, 1]`, written only on request.
    pub diagnostics: Vec<(&'static str, Image)>,
}

/// Runs one method on an already-loaded pair. The thermal frame must be
/// single channel; the visual frame may be grey or colour.
pub fn fuse_images(
    method: FuseMethod,
    thermal: &Image,
    visual: &Image,
    cfg: &RunConfig,
) -> Result<Fused> {
    Ok(match method {
        FuseMethod::Rgif => {
            let out = rgif_fuse(thermal, visual, &cfg.rgif)?;
            Fused {
                image: out.fused,
                used_fallback: out.used_fallback,
                diagnostics: Vec::new(),
            }
        }
        FuseMethod::Rgmaf => {
            let out = rgmaf_fuse(thermal, visual, &cfg.rgmaf)?;
            let d = out.diagnostics;
            Fused {
                image: out.fused,
                used_fallback: out.used_fallback,
                diagnostics: vec![
                    ("w_thermal", d.weights.w_thermal),
                    ("w_visual", d.weights.w_visual),
                    ("w_visual_gated", d.weights.w_visual_gated),
                    ("reliability", d.reliability),
                    ("valid", d.valid.to_image().map(|v| v / 255.0)),
                ],
            }
        }
        FuseMethod::Baseline(b) => Fused {
            image: fuse_baseline(b, thermal, visual, &cfg.baseline)?,
            used_fallback: false,
            diagnostics: Vec::new(),
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ManifestRow {
    pub pair: String,
    pub method: String,
    pub status: String,
    pub used_fallback: Option<bool>,
    pub output: Option<String>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimingRow {
    pub pair: String,
    pub t_load_ms: f64,
    pub t_fuse_ms: f64,
    pub t_write_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Manifest {
    pub method: String,
    pub rows: Vec<ManifestRow>,
    pub thermal_only: Vec<String>,
    pub visual_only: Vec<String>,
}

impl Manifest {
    pub fn failed(&self) -> usize {
        self.rows.iter().filter(|r| r.status != "ok").count()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# pair method status used_fallback output\n");
        for r in &self.rows {
            let fb = r.used_fallback.map_or("-".to_string(), |b| b.to_string());
            let _ = writeln!(
                s,
                "{} {} {} {} {}",
                r.pair,
                r.method,
                r.status,
                fb,
                r.output.as_deref().unwrap_or("-")
            );
            if let Some(e) = &r.error {
                let _ = writeln!(s, "#   {e}");
            }
        }
        for stem in &self.thermal_only {
            let _ = writeln!(s, "# unmatched thermal {stem}");
        }
        for stem in &self.visual_only {
            let _ = writeln!(s, "# unmatched visual {stem}");
        }
        s
    }
}

fn fuse_one(
    pair: &Pair,
    method: FuseMethod,
    cfg: &RunConfig,
    out_dir: &Path,
) -> (ManifestRow, TimingRow) {
    let mut timing = TimingRow {
        pair: pair.stem.clone(),
        t_load_ms: 0.0,
        t_fuse_ms: 0.0,
        t_write_ms: 0.0,
    };
    let ms = |t: Instant| t.elapsed().as_secs_f64() * 1e3;
    let run = |timing: &mut TimingRow| -> Result<(bool, String)> {
        let t = Instant::now();
        let thermal = load_gray(&pair.thermal)?;
        let visual = load_any(&pair.visual)?;
        timing.t_load_ms = ms(t);
        let t = Instant::now();
        let fused = fuse_images(method, &thermal, &visual, cfg)?;
        timing.t_fuse_ms = ms(t);
        let t = Instant::now();
        let name = format!("{}.png", pair.stem);
        io::save_png(&fused.image, out_dir.join(&name))?;
        if cfg.dump_diagnostics {
            let dir = out_dir.join("diagnostics");
            std::fs::create_dir_all(&dir)?;
            for (tag, map) in &fused.diagnostics {
                io::save_png(
                    &map.map(|v| v * 255.0),
                    dir.join(format!("{}_{tag}.png", pair.stem)),
                )?;
            }
        }
        timing.t_write_ms = ms(t);
        Ok((fused.used_fallback, name))
    };
    let row = match run(&mut timing) {
        Ok((fb, name)) => ManifestRow {
            pair: pair.stem.clone(),
            method: method.name().into(),
            status: "ok".into(),
            used_fallback: Some(fb),
            output: Some(name),
            error: None,
        },
        Err(e) => ManifestRow {
            pair: pair.stem.clone(),
            method: method.name().into(),
            status: "error".into(),
            used_fallback: None,
            output: None,
            error: Some(format!("{e:#}")),
        },
    };
    (row, timing)
}

/// Fuses every stem-matched pair into `out_dir` and writes the manifest.
/// Per-pair failures are recorded, not propagated; an empty pairing is an
/// error.
pub fn cmd_fuse(
    cfg: &RunConfig,
    method: FuseMethod,
    thermal_dir: &Path,
    visual_dir: &Path,
    out_dir: &Path,
) -> Result<Manifest> {
    cfg.validate()?;
    let pairing = pair_dirs(thermal_dir, visual_dir)?;
    if pairing.pairs.is_empty() {
        bail!(
            "no image pairs with matching stems in {} and {}",
            thermal_dir.display(),
            visual_dir.display()
        );
    }
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    cfg.echo(out_dir)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers())
        .build()?;
    let results: Vec<(ManifestRow, TimingRow)> = pool.install(|| {
        pairing
            .pairs
            .par_iter()
            .map(|p| fuse_one(p, method, cfg, out_dir))
            .collect()
    });
    let (rows, timings): (Vec<_>, Vec<_>) = results.into_iter().unzip();

    let manifest = Manifest {
        method: method.name().into(),
        rows,
        thermal_only: pairing.thermal_only,
        visual_only: pairing.visual_only,
    };
    std::fs::write(out_dir.join(MANIFEST_TXT), manifest.to_text())?;
    std::fs::write(
        out_dir.join(MANIFEST_JSON),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;

    let mut t = String::from("# pair t_load_ms t_fuse_ms t_write_ms\n");
    for r in &timings {
        let _ = writeln!(
            t,
            "{} {:.3} {:.3} {:.3}",
            r.pair, r.t_load_ms, r.t_fuse_ms, r.t_write_ms
        );
    }
    std::fs::write(out_dir.join(TIMINGS_TXT), t)?;
    std::fs::write(
        out_dir.join(TIMINGS_JSON),
        serde_json::to_string_pretty(&timings)? + "\n",
    )?;
    Ok(manifest)
}
