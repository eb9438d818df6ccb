use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use hetfuse::evalbench::{coco_thresholds, BoxFormat, DegradeKind};
use hetfuse::registration::RegistrationMode;
use hetfuse_cli::{
    cmd_bench, cmd_degrade, cmd_eval, cmd_fuse, cmd_register, tune_allocator, FuseMethod, RunConfig,
};

#[derive(Parser)]
#[command(
    name = "hetfuse",
    version,
    about = "Thermal-visual image fusion, registration, evaluation and benchmarking"
)]
struct Cli {
    /// Flat key = value config file; flags and --set override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for `fuse` (0 = all cores). `bench` always uses one.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Extra `key=value` overrides, applied in order.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fuse every stem-matched thermal/visual pair.
    Fuse {
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        thermal: PathBuf,
        #[arg(long)]
        visual: PathBuf,
        /// Write RGMAF weight, reliability and validity maps.
        #[arg(long)]
        dump_diagnostics: bool,
    },
    /// Register one visual frame onto one thermal frame.
    Register {
        #[arg(long)]
        thermal: PathBuf,
        #[arg(long)]
        visual: PathBuf,
        /// ecc_affine, feature_homography or ecc_then_flow.
        #[arg(long)]
        mode: Option<RegistrationMode>,
    },
    /// Score prediction files against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// voc or coco_center.
        #[arg(long)]
        format: Option<BoxFormat>,
        /// Comma-separated IoU thresholds, or `coco` for 0.50:0.05:0.95.
        #[arg(long)]
        thresholds: Option<String>,
    },
    /// Time one method on paired directories, single threaded.
    Bench {
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        thermal: PathBuf,
        #[arg(long)]
        visual: PathBuf,
        #[arg(long)]
        warmup: Option<usize>,
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Blur (and for visual, darken) every image under a directory.
    Degrade {
        #[arg(long)]
        input: PathBuf,
        /// visual or thermal.
        #[arg(long)]
        kind: DegradeKind,
    },
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.set("seed", &s.to_string())?;
    }
    if let Some(j) = cli.jobs {
        cfg.set("jobs", &j.to_string())?;
    }
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut cfg = resolve(&cli)?;
    match cli.command {
        Command::Fuse {
            method,
            thermal,
            visual,
            dump_diagnostics,
        } => {
            if let Some(m) = method {
                cfg.set("method", &m)?;
            }
            if dump_diagnostics {
                cfg.set("dump_diagnostics", "true")?;
            }
            let method: FuseMethod = cfg.method.parse()?;
            let manifest = cmd_fuse(&cfg, method, &thermal, &visual, &cli.out)?;
            for stem in manifest.thermal_only.iter().chain(&manifest.visual_only) {
                eprintln!("skipped unmatched stem `{stem}`");
            }
            for r in manifest.rows.iter().filter(|r| r.status != "ok") {
                eprintln!("{}: {}", r.pair, r.error.as_deref().unwrap_or("failed"));
            }
            let failed = manifest.failed();
            println!(
                "fused {} of {} pairs into {}",
                manifest.rows.len() - failed,
                manifest.rows.len(),
                cli.out.display()
            );
            Ok(if failed > 0 {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Register {
            thermal,
            visual,
            mode,
        } => {
            if let Some(m) = mode {
                cfg.set("registration.mode", &m.to_string())?;
            }
            cfg.validate()?;
            cfg.echo(&cli.out)?;
            let r = cmd_register(&cfg.rgif.registration, &thermal, &visual, &cli.out)?;
            match r.correlation {
                Some(rho) => println!("correlation {rho:.6} iterations {}", r.iterations),
                None => println!("correlation - iterations {}", r.iterations),
            }
            if r.used_fallback {
                println!("registration failed; identity written as fallback");
            }
            println!("warp written to {}", r.warp_file.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval {
            pred,
            gt,
            format,
            thresholds,
        } => {
            if let Some(f) = format {
                cfg.set("eval.format", &f.to_string())?;
            }
            match thresholds.as_deref() {
                Some("coco") => cfg.eval_thresholds = coco_thresholds(),
                Some(t) => cfg.set("eval.thresholds", t)?,
                None => {}
            }
            cfg.validate()?;
            cfg.echo(&cli.out)?;
            let out = cmd_eval(&pred, &gt, cfg.eval_format, &cfg.eval_thresholds, &cli.out)?;
            let a = &out.aggregate;
            println!(
                "precision {:.4} recall {:.4} map {:.4} map50 {:.4} map50_95 {:.4}",
                a.precision, a.recall, a.map, a.map50, a.map50_95
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench {
            method,
            thermal,
            visual,
            warmup,
            repeats,
        } => {
            if let Some(m) = method {
                cfg.set("method", &m)?;
            }
            if let Some(w) = warmup {
                cfg.set("bench.warmup", &w.to_string())?;
            }
            if let Some(r) = repeats {
                cfg.set("bench.repeats", &r.to_string())?;
            }
            let method: FuseMethod = cfg.method.parse()?;
            let out = cmd_bench(&cfg, method, &thermal, &visual, &cli.out)?;
            let t = &out.timing;
            println!(
                "{}: latency {:.3} ms ({:.3} + {:.3} + {:.3}), {:.2} fps, cv {:.4}",
                out.method, t.latency, t.t_pre, t.t_inf, t.t_post, t.fps, t.latency_cv
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Degrade { input, kind } => {
            let written = cmd_degrade(&input, kind, &cli.out)?;
            println!(
                "degraded {} images into {}",
                written.len(),
                cli.out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    tune_allocator();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
