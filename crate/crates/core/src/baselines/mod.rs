//! Classical pixel-level fusion methods and decision-level box fusion.
//!
//! Pixel methods expect both frames on the same grid; [`fuse_baseline`]
//! resizes the visual frame to the thermal grid first. Outputs are clipped
//! to `[0, 255]`.

mod decision;
mod multiscale;

pub use decision::decision_fuse;

use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{resample_bilinear, ycrcb, ycrcb_inverse, Image};
use crate::rgif::{guided_filter, luminance, GuidedFilterParams};

/// Compositing weight of the pseudo-colour layer in [`overlay_fuse`].
pub const OVERLAY_ALPHA: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Colormap {
    Jet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub alpha: f64,
    pub w_thermal: f64,
    pub w_visual: f64,
    pub pyramid_levels: usize,
    pub wavelet_levels: usize,
    pub overlay_colormap: Colormap,
    pub decision_iou_thr: f64,
    /// Edge-preserving smoother of the classical guided method.
    pub guided: GuidedFilterParams,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            w_thermal: 0.5,
            w_visual: 0.5,
            pyramid_levels: 4,
            wavelet_levels: 2,
            overlay_colormap: Colormap::Jet,
            decision_iou_thr: 0.5,
            guided: GuidedFilterParams {
                radius: 8,
                epsilon: 0.01,
            },
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.alpha) || !unit(self.decision_iou_thr) {
            return Err(Error::InvalidConfig(
                "alpha and decision_iou_thr must lie in [0, 1]".into(),
            ));
        }
        if self.w_thermal < 0.0
            || self.w_visual < 0.0
            || ((self.w_thermal + self.w_visual) - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidConfig(
                "weights must be >= 0 and sum to 1".into(),
            ));
        }
        if self.pyramid_levels == 0 || self.wavelet_levels == 0 {
            return Err(Error::InvalidConfig(
                "pyramid and wavelet levels must be >= 1".into(),
            ));
        }
        self.guided.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PixelMethod {
    Alpha,
    Weighted,
}

/// `alpha * t + (1 - alpha) * v` or `w_t * t + w_v * v`.
pub fn pixel_fuse(
    t: &Image,
    v: &Image,
    method: PixelMethod,
    cfg: &BaselineConfig,
) -> Result<Image> {
    cfg.validate()?;
    let (a, b) = match method {
        PixelMethod::Alpha => (cfg.alpha, 1.0 - cfg.alpha),
        PixelMethod::Weighted => (cfg.w_thermal, cfg.w_visual),
    };
    Ok(t.zip_map(v, |x, y| a * x + b * y)?.clamp(0.0, 255.0))
}

/// 256-entry jet ramp, coldest first.
pub fn jet_table() -> &'static [[f64; 3]; 256] {
    static TABLE: OnceLock<[[f64; 3]; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let f = |x: f64, c: f64| (1.5 - (4.0 * x - c).abs()).clamp(0.0, 1.0) * 255.0;
        std::array::from_fn(|i| {
            let x = i as f64 / 255.0;
            [f(x, 3.0), f(x, 2.0), f(x, 1.0)]
        })
    })
}

/// Pseudo-coloured thermal composited over the visual frame.
pub fn overlay_fuse(t: &Image, v: &Image, cfg: &BaselineConfig) -> Result<Image> {
    cfg.validate()?;
    t.expect_channels(1)?;
    t.expect_same_grid(v)?;
    let v = match v.channels() {
        1 => v.replicate3()?,
        _ => v.clone(),
    };
    let table = match cfg.overlay_colormap {
        Colormap::Jet => jet_table(),
    };
    let n = t.pixel_count();
    let mut out = vec![0.0; 3 * n];
    for (i, &x) in t.data().iter().enumerate() {
        let rgb = table[x.clamp(0.0, 255.0).round() as usize];
        for c in 0..3 {
            let bg = v.plane(c)[i];
            out[c * n + i] =
                (OVERLAY_ALPHA * rgb[c] + (1.0 - OVERLAY_ALPHA) * bg).clamp(0.0, 255.0);
        }
    }
    Image::from_vec(t.width(), t.height(), 3, out)
}

/// Low-pass residual averaged, band-pass coefficients by larger magnitude.
pub fn laplacian_fuse(t: &Image, v: &Image, cfg: &BaselineConfig) -> Result<Image> {
    cfg.validate()?;
    Ok(multiscale::laplacian_fuse_planes(t, v, cfg.pyramid_levels)?.clamp(0.0, 255.0))
}

/// Haar approximation averaged, detail coefficients by larger magnitude.
pub fn wavelet_fuse(t: &Image, v: &Image, cfg: &BaselineConfig) -> Result<Image> {
    cfg.validate()?;
    Ok(multiscale::wavelet_fuse_planes(t, v, cfg.wavelet_levels)?.clamp(0.0, 255.0))
}

/// Self-guided base layers averaged, detail layers by larger magnitude.
pub fn classical_guided_fuse(t: &Image, v: &Image, cfg: &BaselineConfig) -> Result<Image> {
    cfg.validate()?;
    let bt = guided_filter(t, t, &cfg.guided)?;
    let bv = guided_filter(v, v, &cfg.guided)?;
    let n = t.pixel_count();
    let out = (0..n)
        .map(|i| {
            let (ti, vi, bti, bvi) = (t.data()[i], v.data()[i], bt.data()[i], bv.data()[i]);
            let d = multiscale::max_abs(ti - bti, vi - bvi);
            (0.5 * (bti + bvi) + d).clamp(0.0, 255.0)
        })
        .collect();
    Image::from_vec(t.width(), t.height(), 1, out)
}

/// Visual luminance replaced by the thermal frame, chroma kept.
pub fn ycrcb_fuse(t: &Image, v: &Image, cfg: &BaselineConfig) -> Result<Image> {
    cfg.validate()?;
    t.expect_channels(1)?;
    v.expect_channels(3)?;
    t.expect_same_grid(v)?;
    let yc = ycrcb(v)?;
    let planes = [t.data(), yc.plane(1), yc.plane(2)];
    let swapped = Image::from_planes(t.width(), t.height(), &planes)?;
    Ok(ycrcb_inverse(&swapped)?.clamp(0.0, 255.0))
}

/// Pixel-level methods selectable by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    Alpha,
    Weighted,
    Overlay,
    Laplacian,
    Wavelet,
    Guided,
    Ycrcb,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 7] = [
        Self::Alpha,
        Self::Weighted,
        Self::Overlay,
        Self::Laplacian,
        Self::Wavelet,
        Self::Guided,
        Self::Ycrcb,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Alpha => "alpha",
            Self::Weighted => "weighted",
            Self::Overlay => "overlay",
            Self::Laplacian => "laplacian",
            Self::Wavelet => "wavelet",
            Self::Guided => "guided",
            Self::Ycrcb => "ycrcb",
        }
    }
}

impl FromStr for BaselineMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown baseline `{s}`")))
    }
}

/// Resizes the visual frame to the thermal grid and dispatches. Overlay and
/// YCrCb keep the visual colour; the rest fuse luminance.
pub fn fuse_baseline(
    method: BaselineMethod,
    thermal: &Image,
    visual: &Image,
    cfg: &BaselineConfig,
) -> Result<Image> {
    thermal.expect_channels(1)?;
    let (w, h) = thermal.dims();
    let v = resample_bilinear(visual, w, h)?;
    match method {
        BaselineMethod::Overlay => overlay_fuse(thermal, &v, cfg),
        BaselineMethod::Ycrcb => {
            let v = if v.channels() == 1 {
                v.replicate3()?
            } else {
                v
            };
            ycrcb_fuse(thermal, &v, cfg)
        }
        _ => {
            let y = luminance(&v)?;
            match method {
                BaselineMethod::Alpha => pixel_fuse(thermal, &y, PixelMethod::Alpha, cfg),
                BaselineMethod::Weighted => pixel_fuse(thermal, &y, PixelMethod::Weighted, cfg),
                BaselineMethod::Laplacian => laplacian_fuse(thermal, &y, cfg),
                BaselineMethod::Wavelet => wavelet_fuse(thermal, &y, cfg),
                _ => classical_guided_fuse(thermal, &y, cfg),
            }
        }
    }
}
