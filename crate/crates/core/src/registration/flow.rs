//! Pyramidal Horn-Schunck with iterative re-warping.

use serde::{Deserialize, Serialize};

use super::FlowField;
use crate::error::{Error, Result};
use crate::imgcore::{gaussian, gradient, resample_bilinear, sample_bilinear, Image};

const MIN_LEVEL_SIDE: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub levels: usize,
    /// Re-linearisations per level.
    pub warps: usize,
    /// Jacobi sweeps per linearisation.
    pub iterations: usize,
    /// Smoothness weight, in intensity units.
    pub alpha: f64,
    /// Displacements are clamped to this length in pixels.
    pub max_magnitude: f64,
    /// Gaussian sigma applied to both inputs first; 0 disables.
    pub presmooth: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            warps: 3,
            iterations: 60,
            alpha: 12.0,
            max_magnitude: 16.0,
            presmooth: 1.0,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.warps == 0 || self.iterations == 0 {
            return Err(Error::InvalidConfig(
                "flow levels, warps and iterations must be >= 1".into(),
            ));
        }
        if !(self.alpha > 0.0) || !(self.max_magnitude > 0.0) || !(self.presmooth >= 0.0) {
            return Err(Error::InvalidConfig(
                "flow alpha and max_magnitude must be > 0, presmooth >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Residual flow such that `warped(p + d(p)) ≈ reference(p)`.
pub fn dense_flow_refine(reference: &Image, warped: &Image, cfg: &FlowConfig) -> Result<FlowField> {
    cfg.validate()?;
    reference.expect_channels(1)?;
    warped.expect_channels(1)?;
    reference.expect_same_grid(warped)?;
    let (w, h) = reference.dims();
    let (r0, m0) = if cfg.presmooth > 0.0 {
        (
            gaussian(reference, cfg.presmooth)?,
            gaussian(warped, cfg.presmooth)?,
        )
    } else {
        (reference.clone(), warped.clone())
    };

    let mut pyr = vec![(r0, m0)];
    while pyr.len() < cfg.levels {
        let (r, m) = pyr.last().unwrap();
        let (lw, lh) = r.dims();
        if lw / 2 < MIN_LEVEL_SIDE || lh / 2 < MIN_LEVEL_SIDE {
            break;
        }
        let (nw, nh) = (lw.div_ceil(2), lh.div_ceil(2));
        let down = |img: &Image| resample_bilinear(&gaussian(img, 1.0)?, nw, nh);
        let next = (down(r)?, down(m)?);
        pyr.push(next);
    }

    let mut flow: Option<FlowField> = None;
    for (r, m) in pyr.iter().rev() {
        let (lw, lh) = r.dims();
        let mut f = match flow.take() {
            None => FlowField::zeros(lw, lh),
            Some(c) => upsample_flow(&c, lw, lh)?,
        };
        for _ in 0..cfg.warps {
            refine_level(r, m, &mut f, cfg)?;
        }
        flow = Some(f);
    }
    let flow = flow.unwrap_or_else(|| FlowField::zeros(w, h));
    debug_assert_eq!((flow.width, flow.height), (w, h));
    Ok(flow)
}

fn upsample_flow(c: &FlowField, w: usize, h: usize) -> Result<FlowField> {
    let sx = w as f64 / c.width as f64;
    let sy = h as f64 / c.height as f64;
    let dx = Image::from_vec(c.width, c.height, 1, c.dx.clone())?;
    let dy = Image::from_vec(c.width, c.height, 1, c.dy.clone())?;
    Ok(FlowField {
        width: w,
        height: h,
        dx: resample_bilinear(&dx, w, h)?
            .into_vec()
            .into_iter()
            .map(|v| v * sx)
            .collect(),
        dy: resample_bilinear(&dy, w, h)?
            .into_vec()
            .into_iter()
            .map(|v| v * sy)
            .collect(),
    })
}

fn refine_level(
    reference: &Image,
    moving: &Image,
    f: &mut FlowField,
    cfg: &FlowConfig,
) -> Result<()> {
    let (w, h) = reference.dims();
    let mw = apply_flow(moving, f)?;
    let (rgx, rgy) = gradient(reference)?;
    let (mgx, mgy) = gradient(&mw)?;
    let n = w * h;
    let ix: Vec<f64> = (0..n)
        .map(|i| 0.5 * (rgx.data()[i] + mgx.data()[i]))
        .collect();
    let iy: Vec<f64> = (0..n)
        .map(|i| 0.5 * (rgy.data()[i] + mgy.data()[i]))
        .collect();
    let it: Vec<f64> = (0..n).map(|i| mw.data()[i] - reference.data()[i]).collect();
    let a2 = cfg.alpha * cfg.alpha;

    let (u0, v0) = (f.dx.clone(), f.dy.clone());
    let (mut u, mut v) = (u0.clone(), v0.clone());
    let (mut un, mut vn) = (vec![0.0; n], vec![0.0; n]);
    for _ in 0..cfg.iterations {
        for y in 0..h {
            let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
            for x in 0..w {
                let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
                let i = y * w + x;
                let nb = [y * w + xl, y * w + xr, yu * w + x, yd * w + x];
                let ub = nb.iter().map(|&j| u[j]).sum::<f64>() * 0.25;
                let vb = nb.iter().map(|&j| v[j]).sum::<f64>() * 0.25;
                let (gx, gy) = (ix[i], iy[i]);
                let r = (gx * (ub - u0[i]) + gy * (vb - v0[i]) + it[i]) / (a2 + gx * gx + gy * gy);
                un[i] = ub - gx * r;
                vn[i] = vb - gy * r;
            }
        }
        std::mem::swap(&mut u, &mut un);
        std::mem::swap(&mut v, &mut vn);
    }
    for i in 0..n {
        let mag = u[i].hypot(v[i]);
        if mag > cfg.max_magnitude {
            let s = cfg.max_magnitude / mag;
            u[i] *= s;
            v[i] *= s;
        }
    }
    f.dx = u;
    f.dy = v;
    Ok(())
}

/// Resamples every channel of `img` at `p + flow(p)` with edge replication.
pub fn apply_flow(img: &Image, flow: &FlowField) -> Result<Image> {
    let (w, h) = img.dims();
    if (flow.width, flow.height) != (w, h) {
        return Err(Error::DimensionMismatch {
            left: (w, h),
            right: (flow.width, flow.height),
        });
    }
    let mut data = Vec::with_capacity(img.data().len());
    for c in 0..img.channels() {
        let plane = img.plane(c);
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                data.push(sample_bilinear(
                    plane,
                    w,
                    h,
                    x as f64 + flow.dx[i],
                    y as f64 + flow.dy[i],
                ));
            }
        }
    }
    Image::from_vec(w, h, img.channels(), data)
}
