use std::path::Path;
use std::process::{Command, Output};

use hetfuse::imgcore::io::{load, save_png};
use hetfuse::registration::{read_warp_file, Warp};
use hetfuse::synthetic::{scene_pair, textured, warped_crop_pair};
use hetfuse::{AffineWarp, Image};
use tempfile::TempDir;

fn hetfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetfuse"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Two matched pairs (`a`, `b`) plus one unmatched stem on each side.
fn toy_set(root: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let t = root.join("thermal");
    let v = root.join("visual");
    std::fs::create_dir_all(&t).unwrap();
    std::fs::create_dir_all(&v).unwrap();
    for (k, stem) in ["a", "b"].iter().enumerate() {
        let (th, vis) = scene_pair(48, 40, k as u64 + 1);
        save_png(&th, t.join(format!("{stem}.png"))).unwrap();
        save_png(&vis, v.join(format!("{stem}.png"))).unwrap();
    }
    save_png(&textured(48, 40, 9, 2.0), t.join("only_t.png")).unwrap();
    save_png(&textured(48, 40, 9, 2.0), v.join("only_v.png")).unwrap();
    std::fs::write(t.join("notes.txt"), "ignored").unwrap();
    (t, v)
}

#[test]
fn fuse_rgif_toy_set() {
    let dir = TempDir::new().unwrap();
    let (t, v) = toy_set(dir.path());
    let out = dir.path().join("out");
    let o = hetfuse(&[
        "fuse",
        "--method",
        "rgif",
        "--thermal",
        s(&t),
        "--visual",
        s(&v),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for stem in ["a", "b"] {
        let img = load(out.join(format!("{stem}.png"))).unwrap();
        assert_eq!((img.dims(), img.channels()), ((48, 40), 1));
    }
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    let rows: Vec<&str> = manifest.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("a rgif ok "));
    assert!(manifest.contains("# unmatched thermal only_t"));
    assert!(manifest.contains("# unmatched visual only_v"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 2);
    assert!(out.join("timings.txt").exists());
    assert!(out.join("config.resolved.txt").exists());
    assert!(String::from_utf8_lossy(&o.stderr).contains("only_t"));
}

#[test]
fn every_method_runs() {
    let dir = TempDir::new().unwrap();
    let (t, v) = toy_set(dir.path());
    for m in [
        "rgmaf",
        "alpha",
        "weighted",
        "overlay",
        "laplacian",
        "wavelet",
        "guided",
        "ycrcb",
    ] {
        let out = dir.path().join(m);
        let o = hetfuse(&[
            "fuse",
            "--method",
            m,
            "--thermal",
            s(&t),
            "--visual",
            s(&v),
            "--out",
            s(&out),
            "--jobs",
            "2",
        ]);
        assert!(
            o.status.success(),
            "{m}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert_eq!(load(out.join("a.png")).unwrap().dims(), (48, 40));
    }
}

#[test]
fn unknown_method_is_usage_error() {
    let dir = TempDir::new().unwrap();
    let (t, v) = toy_set(dir.path());
    let o = hetfuse(&[
        "fuse",
        "--method",
        "densefuse",
        "--thermal",
        s(&t),
        "--visual",
        s(&v),
        "--out",
        s(dir.path()),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown method"));
}

#[test]
fn rgmaf_diagnostics_are_written() {
    let dir = TempDir::new().unwrap();
    let (t, v) = toy_set(dir.path());
    let out = dir.path().join("out");
    let o = hetfuse(&[
        "fuse",
        "--method",
        "rgmaf",
        "--dump-diagnostics",
        "--thermal",
        s(&t),
        "--visual",
        s(&v),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success());
    for tag in [
        "w_thermal",
        "w_visual",
        "w_visual_gated",
        "reliability",
        "valid",
    ] {
        assert!(
            out.join("diagnostics")
                .join(format!("a_{tag}.png"))
                .exists(),
            "{tag}"
        );
    }
}

#[test]
fn no_pairs_fails() {
    let dir = TempDir::new().unwrap();
    let t = dir.path().join("t");
    let v = dir.path().join("v");
    std::fs::create_dir_all(&t).unwrap();
    std::fs::create_dir_all(&v).unwrap();
    save_png(&textured(8, 8, 1, 1.0), t.join("x.png")).unwrap();
    let o = hetfuse(&[
        "fuse",
        "--thermal",
        s(&t),
        "--visual",
        s(&v),
        "--out",
        s(dir.path()),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("no image pairs"));
}

#[test]
fn unreadable_pair_is_recorded_and_batch_continues() {
    let dir = TempDir::new().unwrap();
    let (t, v) = toy_set(dir.path());
    std::fs::write(t.join("b.png"), b"not a png").unwrap();
    let out = dir.path().join("out");
    let o = hetfuse(&[
        "fuse",
        "--thermal",
        s(&t),
        "--visual",
        s(&v),
        "--out",
        s(&out),
    ]);
    assert!(!o.status.success());
    assert!(out.join("a.png").exists());
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("a rgif ok"));
    assert!(manifest.contains("b rgif error - -"));
}

#[test]
fn fuse_is_bit_reproducible_and_replayable() {
    let dir = TempDir::new().unwrap();
    let (t, v) = toy_set(dir.path());
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec![
            "fuse",
            "--method",
            "rgmaf",
            "--thermal",
            s(&t),
            "--visual",
            s(&v),
            "--out",
            s(&out),
        ];
        args.extend_from_slice(extra);
        let args: Vec<String> = args.into_iter().map(String::from).collect();
        let o = Command::new(env!("CARGO_BIN_EXE_hetfuse"))
            .args(&args)
            .output()
            .unwrap();
        assert!(o.status.success());
        out
    };
    let a = run("run1", &["--seed", "3", "--set", "rgmaf.beta=0.5"]);
    let b = run("run2", &["--seed", "3", "--set", "rgmaf.beta=0.5"]);
    let replay_cfg = a.join("config.resolved.txt");
    let c = run("run3", &["--config", s(&replay_cfg)]);
    for f in [
        "a.png",
        "b.png",
        "manifest.txt",
        "manifest.json",
        "config.resolved.txt",
    ] {
        let x = std::fs::read(a.join(f)).unwrap();
        assert_eq!(x, std::fs::read(b.join(f)).unwrap(), "{f}");
        assert_eq!(x, std::fs::read(c.join(f)).unwrap(), "{f} (replay)");
    }
}

#[test]
fn register_self_shift_and_textureless() {
    let dir = TempDir::new().unwrap();
    let root = dir.path();
    let warp_of = |out: &Path| read_warp_file(out.join("warp.txt")).unwrap().remove(0);

    let img = textured(128, 128, 4, 2.0);
    save_png(&img, root.join("self.png")).unwrap();
    let out = root.join("self");
    let o = hetfuse(&[
        "register",
        "--thermal",
        s(&root.join("self.png")),
        "--visual",
        s(&root.join("self.png")),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("correlation"));
    let rec = warp_of(&out);
    let Warp::Affine(w) = rec.warp else { panic!() };
    assert!(!rec.fallback);
    assert!(w.max_param_diff(&AffineWarp::default()) < 1e-3);
    assert!(out.join("warped.png").exists());

    let (thermal, visual) = warped_crop_pair(128, 5, 2.0, &AffineWarp::translation(5.0, 3.0), 16);
    save_png(&thermal, root.join("t.png")).unwrap();
    save_png(&visual, root.join("v.png")).unwrap();
    let out = root.join("shift");
    assert!(hetfuse(&[
        "register",
        "--thermal",
        s(&root.join("t.png")),
        "--visual",
        s(&root.join("v.png")),
        "--out",
        s(&out)
    ])
    .status
    .success());
    let Warp::Affine(w) = warp_of(&out).warp else {
        panic!()
    };
    assert!(
        (w.m[2] - 5.0).abs() < 0.1 && (w.m[5] - 3.0).abs() < 0.1,
        "{:?}",
        w.m
    );

    save_png(
        &Image::filled(64, 64, 1, 90.0).unwrap(),
        root.join("flat.png"),
    )
    .unwrap();
    let out = root.join("flat");
    let o = hetfuse(&[
        "register",
        "--thermal",
        s(&root.join("t.png")),
        "--visual",
        s(&root.join("flat.png")),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success());
    let rec = warp_of(&out);
    assert!(rec.fallback);
    assert_eq!(rec.warp, Warp::Affine(AffineWarp::default()));
    assert!(std::fs::read_to_string(out.join("warp.txt"))
        .unwrap()
        .starts_with("# fallback"));
}

#[test]
fn register_homography_mode() {
    let dir = TempDir::new().unwrap();
    let img = textured(160, 160, 6, 1.5);
    let p = dir.path().join("i.png");
    save_png(&img, &p).unwrap();
    let out = dir.path().join("out");
    let o = hetfuse(&[
        "register",
        "--mode",
        "feature_homography",
        "--thermal",
        s(&p),
        "--visual",
        s(&p),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rec = read_warp_file(out.join("warp.txt")).unwrap().remove(0);
    let Warp::Homography(h) = rec.warp else {
        panic!("{rec:?}")
    };
    assert!(h.max_param_diff(&hetfuse::Homography::from_affine(&AffineWarp::default())) < 1e-2);
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::create_dir_all(dir).unwrap();
    std::fs::write(dir.join(name), text).unwrap();
}

#[test]
fn eval_cases() {
    let dir = TempDir::new().unwrap();
    let root = dir.path();
    let report = |out: &Path| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(out.join("eval_report.json")).unwrap())
            .unwrap()
    };

    let (p, g) = (root.join("p1"), root.join("g1"));
    write(&g, "x.txt", "0 10 10 50 50\n0 60 60 90 90\n");
    write(&p, "x.txt", "0 10 10 50 50 0.9\n0 60 60 90 90 0.8\n");
    let out = root.join("o1");
    let o = hetfuse(&[
        "eval",
        "--pred",
        s(&p),
        "--gt",
        s(&g),
        "--thresholds",
        "coco",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(report(&out)["aggregate"]["map50"], 1.0);
    assert_eq!(report(&out)["aggregate"]["map50_95"], 1.0);
    assert!(out.join("eval_per_image.txt").exists() && out.join("eval_report.txt").exists());

    let p = root.join("p2");
    write(&p, "x.txt", "");
    let out = root.join("o2");
    assert!(
        hetfuse(&["eval", "--pred", s(&p), "--gt", s(&g), "--out", s(&out)])
            .status
            .success()
    );
    let r = report(&out);
    for k in ["map50", "map50_95", "precision", "recall"] {
        assert_eq!(r["aggregate"][k], 0.0, "{k}");
    }

    // Scores 0.9 TP, 0.8 FP, 0.7 TP on two ground truths.
    let (p, g) = (root.join("p3"), root.join("g3"));
    write(&g, "x.txt", "0 0 0 10 10\n0 20 20 30 30\n");
    write(
        &p,
        "x.txt",
        "0 0 0 10 10 0.9\n0 50 50 60 60 0.8\n0 20 20 30 30 0.7\n",
    );
    let out = root.join("o3");
    assert!(
        hetfuse(&["eval", "--pred", s(&p), "--gt", s(&g), "--out", s(&out)])
            .status
            .success()
    );
    let ap = report(&out)["aggregate"]["map50"].as_f64().unwrap();
    assert_eq!(ap, 5.0 / 6.0);

    write(&p, "orphan.txt", "0 0 0 1 1 0.5\n");
    let o = hetfuse(&["eval", "--pred", s(&p), "--gt", s(&g), "--out", s(&out)]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("orphan"));
}

#[test]
fn bench_reports_satisfy_identities() {
    let dir = TempDir::new().unwrap();
    let (t, v) = toy_set(dir.path());
    for (m, warmup) in [("rgif", "0"), ("rgmaf", "5"), ("alpha", "1")] {
        let out = dir.path().join(format!("bench_{m}"));
        let o = hetfuse(&[
            "bench",
            "--method",
            m,
            "--thermal",
            s(&t),
            "--visual",
            s(&v),
            "--warmup",
            warmup,
            "--repeats",
            "10",
            "--out",
            s(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let r: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("bench_report.json")).unwrap())
                .unwrap();
        let f = |k: &str| r["timing"][k].as_f64().unwrap();
        assert!((f("latency") - (f("t_pre") + f("t_inf") + f("t_post"))).abs() < 1e-9);
        assert!((f("fps") - 1000.0 / f("latency")).abs() < 1e-6);
        assert_eq!(r["repeats"], 10);
        assert_eq!(r["threads"], 1);
        assert_eq!(r["thermal_resolution"], serde_json::json!([48, 40]));
        let text = std::fs::read_to_string(out.join("bench_report.txt")).unwrap();
        assert!(text.contains(&format!("method={m}")));
    }
}

#[test]
fn degrade_mirrors_tree() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("in");
    std::fs::create_dir_all(input.join("sub")).unwrap();
    save_png(
        &Image::filled(20, 20, 3, 200.0).unwrap(),
        input.join("c.png"),
    )
    .unwrap();
    save_png(
        &Image::filled(20, 20, 1, 77.0).unwrap(),
        input.join("sub/g.png"),
    )
    .unwrap();
    let impulse =
        Image::from_fn(31, 31, |x, y| if (x, y) == (15, 15) { 255.0 } else { 0.0 }).unwrap();
    save_png(&impulse, input.join("sub/imp.png")).unwrap();

    let out = dir.path().join("vis");
    assert!(hetfuse(&[
        "degrade",
        "--input",
        s(&input),
        "--kind",
        "visual",
        "--out",
        s(&out)
    ])
    .status
    .success());
    let c = load(out.join("c.png")).unwrap();
    assert_eq!(c.channels(), 3);
    assert!(c.data().iter().all(|&v| v == 120.0));

    let out = dir.path().join("th");
    assert!(hetfuse(&[
        "degrade",
        "--input",
        s(&input),
        "--kind",
        "thermal",
        "--out",
        s(&out)
    ])
    .status
    .success());
    assert!(load(out.join("sub/g.png"))
        .unwrap()
        .data()
        .iter()
        .all(|&v| v == 77.0));
    let blurred = load(out.join("sub/imp.png")).unwrap();
    let sigma: f64 = 2.6;
    let raw: Vec<f64> = (-7..=7)
        .map(|i: i32| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    for y in 0..31usize {
        for x in 0..31usize {
            let (dx, dy) = (x as i32 - 15, y as i32 - 15);
            let want = if dx.abs() <= 7 && dy.abs() <= 7 {
                255.0 * raw[(dx + 7) as usize] * raw[(dy + 7) as usize] / (total * total)
            } else {
                0.0
            };
            assert!((blurred.get(x, y) - want).abs() <= 0.5 + 1e-9, "{x},{y}");
        }
    }

    assert!(!hetfuse(&[
        "degrade",
        "--input",
        s(&input),
        "--kind",
        "both",
        "--out",
        s(&out)
    ])
    .status
    .success());
}
