//! Single-threaded staged timing of one fusion method.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use hetfuse::evalbench::{benchmark, StagedPipeline, TimingReport};
use hetfuse::imgcore::io;
use hetfuse::Image;
use serde::Serialize;

use crate::config::RunConfig;
use crate::fuse::{fuse_images, FuseMethod};
use crate::pairs::{load_any, load_gray, pair_dirs, Pair};

pub const BENCH_TXT: &str = "bench_report.txt";
pub const BENCH_JSON: &str = "bench_report.json";

/// Load, fuse, encode-and-write, one pair per step.
pub struct FusePipeline<'a> {
    pub pairs: Vec<Pair>,
    pub method: FuseMethod,
    pub cfg: &'a RunConfig,
    pub out_dir: PathBuf,
}

impl StagedPipeline for FusePipeline<'_> {
    type Loaded = (usize, Image, Image);
    type Fused = (usize, Image);

    fn len(&self) -> usize {
        self.pairs.len()
    }

    fn preprocess(&mut self, index: usize) -> hetfuse::Result<Self::Loaded> {
        let p = &self.pairs[index];
        let t = load_gray(&p.thermal).map_err(to_core)?;
        let v = load_any(&p.visual).map_err(to_core)?;
        Ok((index, t, v))
    }

    fn infer(&mut self, (index, t, v): Self::Loaded) -> hetfuse::Result<Self::Fused> {
        let fused = fuse_images(self.method, &t, &v, self.cfg).map_err(to_core)?;
        Ok((index, fused.image))
    }

    fn postprocess(&mut self, (index, img): Self::Fused) -> hetfuse::Result<()> {
        let bytes = io::encode_png(&img)?;
        std::fs::write(
            self.out_dir.join(format!("{}.png", self.pairs[index].stem)),
            bytes,
        )?;
        Ok(())
    }
}

fn to_core(e: anyhow::Error) -> hetfuse::Error {
    match e.downcast::<hetfuse::Error>() {
        Ok(c) => c,
        Err(e) => hetfuse::Error::InvalidConfig(format!("{e:#}")),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchOutput {
    pub method: String,
    pub pairs: usize,
    pub thermal_resolution: (usize, usize),
    pub visual_resolution: (usize, usize),
    pub warmup: usize,
    pub repeats: usize,
    pub threads: usize,
    pub timing: TimingReport,
}

impl BenchOutput {
    pub fn to_text(&self) -> String {
        format!(
            "method={}\npairs={}\nthermal_resolution={}x{}\nvisual_resolution={}x{}\nwarmup={}\nrepeats={}\nthreads={}\n{}",
            self.method,
            self.pairs,
            self.thermal_resolution.0,
            self.thermal_resolution.1,
            self.visual_resolution.0,
            self.visual_resolution.1,
            self.warmup,
            self.repeats,
            self.threads,
            self.timing.to_key_values()
        )
    }
}

/// Times `method` on every stem-matched pair on the calling thread.
pub fn cmd_bench(
    cfg: &RunConfig,
    method: FuseMethod,
    thermal_dir: &Path,
    visual_dir: &Path,
    out_dir: &Path,
) -> Result<BenchOutput> {
    cfg.validate()?;
    let pairs = pair_dirs(thermal_dir, visual_dir)?.pairs;
    if pairs.is_empty() {
        bail!("no image pairs to benchmark");
    }
    let first = &pairs[0];
    let thermal_resolution = load_gray(&first.thermal)?.dims();
    let visual_resolution = load_any(&first.visual)?.dims();
    let frames = out_dir.join("bench_frames");
    std::fs::create_dir_all(&frames)?;
    cfg.echo(out_dir)?;

    let mut pipeline = FusePipeline {
        pairs,
        method,
        cfg,
        out_dir: frames,
    };
    let timing = benchmark(&mut pipeline, cfg.bench_warmup, cfg.bench_repeats)?;
    let out = BenchOutput {
        method: method.name().into(),
        pairs: pipeline.pairs.len(),
        thermal_resolution,
        visual_resolution,
        warmup: cfg.bench_warmup,
        repeats: cfg.bench_repeats,
        threads: 1,
        timing,
    };
    std::fs::write(out_dir.join(BENCH_TXT), out.to_text())?;
    std::fs::write(
        out_dir.join(BENCH_JSON),
        serde_json::to_string_pretty(&out)? + "\n",
    )?;
    Ok(out)
}
