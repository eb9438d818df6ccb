//! Single-pair registration with the warp written to disk.

use std::path::{Path, PathBuf};

use anyhow::Result;
use hetfuse::imgcore::{io, resample_bilinear};
use hetfuse::registration::{register, write_warp_file, Transform, Warp, WarpRecord};
use hetfuse::{AffineWarp, RegistrationConfig};

use crate::pairs::load_gray;

pub const WARP_FILE: &str = "warp.txt";
pub const WARPED_IMAGE: &str = "warped.png";

#[derive(Clone, Debug, PartialEq)]
pub struct RegisterOutcome {
    pub warp_file: PathBuf,
    pub warped_image: PathBuf,
    pub used_fallback: bool,
    pub correlation: Option<f64>,
    pub iterations: usize,
}

/// Aligns the visual frame to the thermal frame after resizing it to the
/// thermal grid. The warp maps thermal pixel coordinates to visual ones;
/// a failed estimate writes the identity under a `# fallback` marker.
pub fn cmd_register(
    cfg: &RegistrationConfig,
    thermal: &Path,
    visual: &Path,
    out_dir: &Path,
) -> Result<RegisterOutcome> {
    cfg.validate()?;
    let t = load_gray(thermal)?;
    let (w, h) = t.dims();
    let v = resample_bilinear(&load_gray(visual)?, w, h)?;
    let reg = register(&t, &v, cfg)?;

    let (warp, comment) = match &reg.transform {
        Transform::Identity => (Warp::Affine(AffineWarp::default()), None),
        Transform::Affine(a) => (Warp::Affine(*a), None),
        Transform::Homography(hm) => (Warp::Homography(*hm), None),
        Transform::AffineFlow(a, f) => {
            let (dx, dy) = f.mean();
            (
                Warp::Affine(*a),
                Some(format!(
                    "residual flow applied to the image only, mean ({dx:.4}, {dy:.4})"
                )),
            )
        }
    };
    let comment = match (comment, reg.correlation) {
        (Some(c), _) => Some(c),
        (None, Some(rho)) => Some(format!("correlation {rho} iterations {}", reg.iterations)),
        (None, None) => None,
    };

    std::fs::create_dir_all(out_dir)?;
    let warp_file = out_dir.join(WARP_FILE);
    let warped_image = out_dir.join(WARPED_IMAGE);
    write_warp_file(
        &warp_file,
        &[WarpRecord {
            warp,
            fallback: reg.used_fallback,
            comment,
        }],
    )?;
    io::save_png(&reg.image, &warped_image)?;
    Ok(RegisterOutcome {
        warp_file,
        warped_image,
        used_fallback: reg.used_fallback,
        correlation: reg.correlation,
        iterations: reg.iterations,
    })
}
