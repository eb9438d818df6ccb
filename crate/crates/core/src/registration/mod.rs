//! Geometric alignment of the visual frame to the thermal grid.
//!
//! Coordinate convention: every transform is a plain forward map of pixel
//! coordinates. The estimators ([`ecc_align`], [`feature_homography`]) return
//! the map from *template* (thermal) coordinates into *moving* (visual)
//! coordinates, i.e. `moving(W(p)) ≈ template(p)`. Resampling the moving
//! frame onto the template grid therefore samples through `W` directly
//! ([`warp_affine_sampled`]) or, equivalently, applies [`warp_affine`] with
//! `W`'s inverse.

mod ecc;
mod features;
mod flow;
mod homography;
mod warp;

pub use ecc::{
    ecc_align, ecc_align_from, Alignment, EccSolution, NotConverged, NotConvergedReason,
};
pub use features::{detect_and_describe, match_descriptors, Descriptor, Keypoint};
pub use flow::{apply_flow, dense_flow_refine, FlowConfig};
pub use homography::{feature_homography, fit_homography, ransac_homography, RansacConfig};
pub use warp::{
    read_warp_file, transform_bbox, warp_affine, warp_affine_sampled, warp_perspective,
    warp_perspective_sampled, write_warp_file, Warp, WarpRecord, Warped,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::Image;

/// 2x3 affine map `(x, y) -> (m0 x + m1 y + m2, m3 x + m4 y + m5)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineWarp {
    pub m: [f64; 6],
}

impl Default for AffineWarp {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl AffineWarp {
    pub const IDENTITY: AffineWarp = AffineWarp {
        m: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
    };

    pub fn new(m: [f64; 6]) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(
                "affine parameters must be finite".into(),
            ));
        }
        Ok(Self { m })
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: [1.0, 0.0, tx, 0.0, 1.0, ty],
        }
    }

    pub fn scaling(sx: f64, sy: f64) -> Self {
        Self {
            m: [sx, 0.0, 0.0, 0.0, sy, 0.0],
        }
    }

    /// Rotation by `theta` radians combined with isotropic `scale` about `(cx, cy)`.
    pub fn similarity_about(theta: f64, scale: f64, cx: f64, cy: f64) -> Self {
        let (s, c) = theta.sin_cos();
        let (a, b) = (scale * c, scale * s);
        Self {
            m: [a, -b, cx - a * cx + b * cy, b, a, cy - b * cx - a * cy],
        }
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.m;
        (m[0] * x + m[1] * y + m[2], m[3] * x + m[4] * y + m[5])
    }

    pub fn determinant(&self) -> f64 {
        self.m[0] * self.m[4] - self.m[1] * self.m[3]
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &AffineWarp) -> AffineWarp {
        let a = &self.m;
        let b = &other.m;
        AffineWarp {
            m: [
                a[0] * b[0] + a[1] * b[3],
                a[0] * b[1] + a[1] * b[4],
                a[0] * b[2] + a[1] * b[5] + a[2],
                a[3] * b[0] + a[4] * b[3],
                a[3] * b[1] + a[4] * b[4],
                a[3] * b[2] + a[4] * b[5] + a[5],
            ],
        }
    }

    pub fn inverse(&self) -> Result<AffineWarp> {
        let det = self.determinant();
        if det.abs() <= 1e-12 || !det.is_finite() {
            return Err(Error::SingularWarp);
        }
        let m = &self.m;
        let (a, b, c, d) = (m[4] / det, -m[1] / det, -m[3] / det, m[0] / det);
        Ok(AffineWarp {
            m: [a, b, -(a * m[2] + b * m[5]), c, d, -(c * m[2] + d * m[5])],
        })
    }

    /// Largest parameter difference.
    pub fn max_param_diff(&self, other: &AffineWarp) -> f64 {
        self.m
            .iter()
            .zip(&other.m)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Mean distance between where the two warps send the corners of a
    /// `width x height` grid.
    pub fn mean_corner_error(&self, other: &AffineWarp, width: usize, height: usize) -> f64 {
        grid_corners(width, height)
            .iter()
            .map(|&(x, y)| {
                let (ax, ay) = self.apply(x, y);
                let (bx, by) = other.apply(x, y);
                (ax - bx).hypot(ay - by)
            })
            .sum::<f64>()
            / 4.0
    }
}

/// Projective map stored row-major and scaled so that `h[8] == 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Homography {
    pub h: [f64; 9],
}

impl Default for Homography {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Homography {
    pub const IDENTITY: Homography = Homography {
        h: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
    };

    /// Normalises and validates. Fails with [`Error::SingularWarp`] when the
    /// matrix is not invertible or cannot be normalised.
    pub fn new(h: [f64; 9]) -> Result<Self> {
        if h.iter().any(|v| !v.is_finite()) || h[8].abs() < 1e-15 {
            return Err(Error::SingularWarp);
        }
        let s = 1.0 / h[8];
        let h = h.map(|v| v * s);
        let out = Self { h };
        if out.determinant().abs() <= 1e-12 {
            return Err(Error::SingularWarp);
        }
        Ok(out)
    }

    pub fn from_affine(w: &AffineWarp) -> Self {
        let m = &w.m;
        Self {
            h: [m[0], m[1], m[2], m[3], m[4], m[5], 0.0, 0.0, 1.0],
        }
    }

    pub fn determinant(&self) -> f64 {
        let h = &self.h;
        h[0] * (h[4] * h[8] - h[5] * h[7]) - h[1] * (h[3] * h[8] - h[5] * h[6])
            + h[2] * (h[3] * h[7] - h[4] * h[6])
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let h = &self.h;
        let w = h[6] * x + h[7] * y + h[8];
        (
            (h[0] * x + h[1] * y + h[2]) / w,
            (h[3] * x + h[4] * y + h[5]) / w,
        )
    }

    pub fn inverse(&self) -> Result<Homography> {
        let h = &self.h;
        let det = self.determinant();
        if det.abs() <= 1e-12 {
            return Err(Error::SingularWarp);
        }
        let adj = [
            h[4] * h[8] - h[5] * h[7],
            h[2] * h[7] - h[1] * h[8],
            h[1] * h[5] - h[2] * h[4],
            h[5] * h[6] - h[3] * h[8],
            h[0] * h[8] - h[2] * h[6],
            h[2] * h[3] - h[0] * h[5],
            h[3] * h[7] - h[4] * h[6],
            h[1] * h[6] - h[0] * h[7],
            h[0] * h[4] - h[1] * h[3],
        ];
        Homography::new(adj.map(|v| v / det))
    }

    pub fn compose(&self, other: &Homography) -> Result<Homography> {
        let a = &self.h;
        let b = &other.h;
        let mut out = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                out[r * 3 + c] = (0..3).map(|k| a[r * 3 + k] * b[k * 3 + c]).sum();
            }
        }
        Homography::new(out)
    }

    pub fn max_param_diff(&self, other: &Homography) -> f64 {
        self.h
            .iter()
            .zip(&other.h)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn mean_corner_error(&self, other: &Homography, width: usize, height: usize) -> f64 {
        grid_corners(width, height)
            .iter()
            .map(|&(x, y)| {
                let (ax, ay) = self.apply(x, y);
                let (bx, by) = other.apply(x, y);
                (ax - bx).hypot(ay - by)
            })
            .sum::<f64>()
            / 4.0
    }
}

fn grid_corners(width: usize, height: usize) -> [(f64, f64); 4] {
    let (w, h) = ((width - 1) as f64, (height - 1) as f64);
    [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)]
}

/// Per-pixel displacement on the reference grid: the refined image at `p`
/// samples the source at `p + (dx, dy)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            dx: vec![0.0; width * height],
            dy: vec![0.0; width * height],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.dx.iter().chain(&self.dy).all(|&v| v == 0.0)
    }

    pub fn mean(&self) -> (f64, f64) {
        let n = self.dx.len() as f64;
        (
            self.dx.iter().sum::<f64>() / n,
            self.dy.iter().sum::<f64>() / n,
        )
    }

    pub fn max_magnitude(&self) -> f64 {
        self.dx
            .iter()
            .zip(&self.dy)
            .map(|(x, y)| x.hypot(*y))
            .fold(0.0, f64::max)
    }
}

/// Boolean validity map over an image grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub valid: Vec<bool>,
}

impl Mask {
    pub fn all(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            valid: vec![value; width * height],
        }
    }

    pub fn count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn all_valid(&self) -> bool {
        self.valid.iter().all(|&v| v)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    /// Mask as a 0/255 image.
    pub fn to_image(&self) -> Image {
        let data = self
            .valid
            .iter()
            .map(|&v| if v { 255.0 } else { 0.0 })
            .collect();
        Image::from_raw(self.width, self.height, 1, data)
    }
}

/// Which estimator aligns the visual frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegistrationMode {
    EccAffine,
    FeatureHomography,
    EccThenFlow,
}

impl std::str::FromStr for RegistrationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ecc_affine" | "ecc" => Ok(Self::EccAffine),
            "feature_homography" | "homography" => Ok(Self::FeatureHomography),
            "ecc_then_flow" | "flow" => Ok(Self::EccThenFlow),
            other => Err(Error::InvalidConfig(format!(
                "unknown registration mode `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for RegistrationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::EccAffine => "ecc_affine",
            Self::FeatureHomography => "feature_homography",
            Self::EccThenFlow => "ecc_then_flow",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistrationConfig {
    pub mode: RegistrationMode,
    /// ECC iteration budget per pyramid level.
    pub max_iterations: usize,
    /// Stop once the correlation changes by less than this between iterations.
    pub termination_eps: f64,
    pub pyramid_levels: usize,
    /// ECC runs on a copy halved until its longer side is at most this many
    /// pixels; the warp is then lifted back to full resolution. 0 disables.
    pub max_estimation_side: usize,
    pub ransac: RansacConfig,
    pub flow: FlowConfig,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            mode: RegistrationMode::EccAffine,
            max_iterations: 100,
            termination_eps: 1e-5,
            pyramid_levels: 3,
            max_estimation_side: 320,
            ransac: RansacConfig::default(),
            flow: FlowConfig::default(),
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be >= 1".into()));
        }
        if !(self.termination_eps > 0.0) {
            return Err(Error::InvalidConfig("termination_eps must be > 0".into()));
        }
        if self.pyramid_levels == 0 {
            return Err(Error::InvalidConfig("pyramid_levels must be >= 1".into()));
        }
        self.ransac.validate()?;
        self.flow.validate()
    }
}

/// What the registration stage applied to the moving frame.
#[derive(Clone, Debug, PartialEq)]
pub enum Transform {
    /// Estimation failed; the frame passes through unwarped.
    Identity,
    /// Template-to-moving sampling map.
    Affine(AffineWarp),
    /// Template-to-moving sampling map.
    Homography(Homography),
    /// Global affine followed by a residual flow on the template grid.
    AffineFlow(AffineWarp, FlowField),
}

/// The moving frame resampled onto the template grid.
#[derive(Clone, Debug)]
pub struct Registered {
    pub image: Image,
    pub valid: Mask,
    pub transform: Transform,
    pub used_fallback: bool,
    /// Final ECC correlation when ECC ran and converged.
    pub correlation: Option<f64>,
    pub iterations: usize,
}

/// Aligns `moving` onto `template` (both single channel, same grid) with the
/// estimator selected by `cfg.mode`. Estimation failures are reported through
/// `used_fallback` and the frame passes through unwarped.
pub fn register(template: &Image, moving: &Image, cfg: &RegistrationConfig) -> Result<Registered> {
    template.expect_channels(1)?;
    moving.expect_channels(1)?;
    template.expect_same_grid(moving)?;
    let (w, h) = template.dims();
    let passthrough = |iterations| Registered {
        image: moving.clone(),
        valid: Mask::all(w, h, true),
        transform: Transform::Identity,
        used_fallback: true,
        correlation: None,
        iterations,
    };

    match cfg.mode {
        RegistrationMode::EccAffine | RegistrationMode::EccThenFlow => {
            let solution = match ecc_align(template, moving, cfg)? {
                Alignment::Converged(s) => s,
                Alignment::NotConverged(nc) => return Ok(passthrough(nc.iterations)),
            };
            let warped = warp_affine_sampled(moving, &solution.warp, w, h);
            if cfg.mode == RegistrationMode::EccAffine {
                return Ok(Registered {
                    image: warped.image,
                    valid: warped.valid,
                    transform: Transform::Affine(solution.warp),
                    used_fallback: false,
                    correlation: Some(solution.correlation),
                    iterations: solution.iterations,
                });
            }
            let flow = dense_flow_refine(template, &warped.image, &cfg.flow)?;
            let image = apply_flow(&warped.image, &flow)?;
            let valid = flow_mask(&warped.valid, &flow);
            Ok(Registered {
                image,
                valid,
                transform: Transform::AffineFlow(solution.warp, flow),
                used_fallback: false,
                correlation: Some(solution.correlation),
                iterations: solution.iterations,
            })
        }
        RegistrationMode::FeatureHomography => {
            match feature_homography(template, moving, &cfg.ransac) {
                Ok(hm) => {
                    let warped = warp_perspective_sampled(moving, &hm, w, h);
                    Ok(Registered {
                        image: warped.image,
                        valid: warped.valid,
                        transform: Transform::Homography(hm),
                        used_fallback: false,
                        correlation: None,
                        iterations: 0,
                    })
                }
                Err(Error::InsufficientMatches { .. }) | Err(Error::SingularWarp) => {
                    Ok(passthrough(0))
                }
                Err(e) => Err(e),
            }
        }
    }
}

/// Validity after flow: a pixel stays valid when the location it samples is valid.
fn flow_mask(valid: &Mask, flow: &FlowField) -> Mask {
    let (w, h) = (valid.width, valid.height);
    let mut out = Mask::all(w, h, false);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let sx = (x as f64 + flow.dx[i]).round();
            let sy = (y as f64 + flow.dy[i]).round();
            if sx >= 0.0 && sy >= 0.0 && (sx as usize) < w && (sy as usize) < h {
                out.valid[i] = valid.get(sx as usize, sy as usize);
            }
        }
    }
    out
}
