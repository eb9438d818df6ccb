//! Registration-aware guided image fusion.
//!
//! The thermal frame is filtered with the registered visual luminance as
//! guide, so thermal intensities are kept while edges follow the visual frame.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{min_max_normalize, resample_bilinear, to_grayscale, Image};
use crate::registration::{register, RegistrationConfig};

/// Windows whose guide variance plus epsilon falls below this fraction of the
/// squared guide range are treated as flat. Running-sum round-off at 8-bit
/// scale sits around 1e-10, well under the threshold.
const FLAT_WINDOW_REL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuidedFilterParams {
    /// Box radius; each window spans `2r + 1` pixels per side.
    pub radius: usize,
    pub epsilon: f64,
}

impl Default for GuidedFilterParams {
    fn default() -> Self {
        Self {
            radius: 8,
            epsilon: 0.0,
        }
    }
}

impl GuidedFilterParams {
    pub fn validate(&self) -> Result<()> {
        if self.radius == 0 {
            return Err(Error::InvalidConfig(
                "guided filter radius must be >= 1".into(),
            ));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidConfig(
                "guided filter epsilon must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Guided filter of `input` steered by `guide` (both single channel). The
/// result is not clipped.
///
/// In a window where the guide is flat (`var + eps` below the round-off
/// floor) the local model degenerates to `a = 0, b = mean(p)`.
pub fn guided_filter(guide: &Image, input: &Image, params: &GuidedFilterParams) -> Result<Image> {
    params.validate()?;
    guide.expect_channels(1)?;
    input.expect_channels(1)?;
    guide.expect_same_grid(input)?;
    let (w, h) = guide.dims();
    let n = (w * h) as f64;
    let r = params.radius;

    // Centring keeps the second moments small and the cancellation in
    // `E[x^2] - E[x]^2` harmless.
    let (gsum, lo, hi) = sum_min_max(guide.data());
    let (psum, _, _) = sum_min_max(input.data());
    let ci = (gsum / n).round();
    let cp = (psum / n).round();
    let floor = FLAT_WINDOW_REL * (1.0 + (hi - lo) * (hi - lo));

    // Rows of (a, b) flow through a ring of 2r + 2 rows, enough for every
    // row of the second box pass plus the one entering it.
    let span = 2 * r + 2;
    let mut ring = vec![[0.0; 2]; span * w];
    let mut coef = CoefRows::new(
        guide.data(),
        input.data(),
        w,
        h,
        r,
        ci,
        cp,
        floor,
        params.epsilon,
    );
    let mut cols = vec![[0.0; 2]; w];
    let mut ext = vec![[0.0; 2]; w + 2 * r];
    let clamp_row = |y: isize| y.clamp(0, h as isize - 1) as usize;
    let need = |y: usize, coef: &mut CoefRows, ring: &mut [[f64; 2]]| {
        while coef.next <= y {
            let j = coef.next;
            coef.produce(&mut ring[(j % span) * w..(j % span + 1) * w]);
        }
        (y % span) * w
    };

    for dy in -(r as isize)..=r as isize {
        let off = need(clamp_row(dy), &mut coef, &mut ring);
        for (c, v) in cols.iter_mut().zip(&ring[off..off + w]) {
            c[0] += v[0];
            c[1] += v[1];
        }
    }
    let norm = 1.0 / ((2 * r + 1) * (2 * r + 1)) as f64;
    let mut out = Vec::with_capacity(w * h);
    let g = guide.data();
    for y in 0..h {
        box_row(&cols, r, &mut ext, |x, m| {
            out.push(m[0] * norm * (g[y * w + x] - ci) + m[1] * norm + cp)
        });
        if y + 1 < h {
            let add = need(clamp_row((y + r + 1) as isize), &mut coef, &mut ring);
            let sub = (clamp_row(y as isize - r as isize) % span) * w;
            for (x, c) in cols.iter_mut().enumerate() {
                let (a, s) = (ring[add + x], ring[sub + x]);
                c[0] += a[0] - s[0];
                c[1] += a[1] - s[1];
            }
        }
    }
    Image::from_vec(w, h, 1, out)
}

fn sum_min_max(v: &[f64]) -> (f64, f64, f64) {
    let mut acc = [0.0; 4];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let chunks = v.chunks_exact(4);
    let tail = chunks.remainder();
    for c in chunks {
        for k in 0..4 {
            acc[k] += c[k];
            lo = lo.min(c[k]);
            hi = hi.max(c[k]);
        }
    }
    for &t in tail {
        acc[0] += t;
        lo = lo.min(t);
        hi = hi.max(t);
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3]), lo, hi)
}

/// Horizontal running box sum over one row of column sums, edge replicated.
/// Calls `emit(x, sum)` left to right.
#[inline]
fn box_row<const K: usize>(
    cols: &[[f64; K]],
    r: usize,
    ext: &mut [[f64; K]],
    mut emit: impl FnMut(usize, [f64; K]),
) {
    let w = cols.len();
    ext[..r].fill(cols[0]);
    ext[r..r + w].copy_from_slice(cols);
    ext[r + w..].fill(cols[w - 1]);
    let mut s = [0.0; K];
    for e in &ext[..2 * r + 1] {
        for k in 0..K {
            s[k] += e[k];
        }
    }
    for x in 0..w {
        emit(x, s);
        if x + 1 < w {
            let (a, b) = (ext[x + 2 * r + 1], ext[x]);
            for k in 0..K {
                s[k] += a[k] - b[k];
            }
        }
    }
}

/// First box pass of the guided filter, streamed one row of `(a, b)` at a
/// time from running column sums of I, p, I^2 and Ip.
struct CoefRows<'a> {
    g: &'a [f64],
    p: &'a [f64],
    w: usize,
    h: usize,
    r: usize,
    ci: f64,
    cp: f64,
    floor: f64,
    eps: f64,
    cols: Vec<[f64; 4]>,
    ext: Vec<[f64; 4]>,
    next: usize,
}

impl<'a> CoefRows<'a> {
    #[allow(clippy::too_many_arguments)]
    fn new(
        g: &'a [f64],
        p: &'a [f64],
        w: usize,
        h: usize,
        r: usize,
        ci: f64,
        cp: f64,
        floor: f64,
        eps: f64,
    ) -> Self {
        let mut s = Self {
            g,
            p,
            w,
            h,
            r,
            ci,
            cp,
            floor,
            eps,
            cols: vec![[0.0; 4]; w],
            ext: vec![[0.0; 4]; w + 2 * r],
            next: 0,
        };
        for dy in -(r as isize)..=r as isize {
            let o = s.row(dy);
            for x in 0..w {
                let m = s.moments(o + x);
                for k in 0..4 {
                    s.cols[x][k] += m[k];
                }
            }
        }
        s
    }

    fn row(&self, y: isize) -> usize {
        y.clamp(0, self.h as isize - 1) as usize * self.w
    }

    #[inline]
    fn moments(&self, i: usize) -> [f64; 4] {
        let gi = self.g[i] - self.ci;
        let pi = self.p[i] - self.cp;
        [gi, pi, gi * gi, gi * pi]
    }

    fn produce(&mut self, dst: &mut [[f64; 2]]) {
        let y = self.next;
        let norm = 1.0 / ((2 * self.r + 1) * (2 * self.r + 1)) as f64;
        let (floor, eps) = (self.floor, self.eps);
        let mut ext = std::mem::take(&mut self.ext);
        box_row(&self.cols, self.r, &mut ext, |x, s| {
            let (mi, mp) = (s[0] * norm, s[1] * norm);
            let var = s[2] * norm - mi * mi;
            let cov = s[3] * norm - mi * mp;
            let den = var + eps;
            let a = if den < floor { 0.0 } else { cov / den };
            dst[x] = [a, mp - a * mi];
        });
        self.ext = ext;
        if y + 1 < self.h {
            let add = self.row((y + self.r + 1) as isize);
            let sub = self.row(y as isize - self.r as isize);
            for x in 0..self.w {
                let (a, s) = (self.moments(add + x), self.moments(sub + x));
                let c = &mut self.cols[x];
                for k in 0..4 {
                    c[k] += a[k] - s[k];
                }
            }
        }
        self.next += 1;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RgifConfig {
    pub guided: GuidedFilterParams,
    pub registration: RegistrationConfig,
    /// Working grid = thermal grid scaled by this factor.
    pub upsample_factor: f64,
    /// Resample the fused result back to the thermal input grid.
    pub output_at_native_thermal_grid: bool,
    /// Min-max normalise the thermal frame before upsampling instead of after.
    pub normalize_before_upsample: bool,
}

impl Default for RgifConfig {
    fn default() -> Self {
        Self {
            guided: GuidedFilterParams::default(),
            registration: RegistrationConfig::default(),
            upsample_factor: 2.0,
            output_at_native_thermal_grid: true,
            normalize_before_upsample: false,
        }
    }
}

impl RgifConfig {
    pub fn validate(&self) -> Result<()> {
        self.guided.validate()?;
        self.registration.validate()?;
        if !(self.upsample_factor >= 1.0) || !self.upsample_factor.is_finite() {
            return Err(Error::InvalidConfig("upsample_factor must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct RgifOutput {
    /// Single channel, within `[0, 255]`.
    pub fused: Image,
    /// Registration failed and the visual frame was used unwarped.
    pub used_fallback: bool,
    pub correlation: Option<f64>,
    pub iterations: usize,
}

pub(crate) fn working_grid(width: usize, height: usize, factor: f64) -> (usize, usize) {
    let s = |v: usize| ((v as f64 * factor).round() as usize).max(1);
    (s(width), s(height))
}

/// Luminance of a 1- or 3-channel image.
pub(crate) fn luminance(img: &Image) -> Result<Image> {
    match img.channels() {
        1 => Ok(img.clone()),
        _ => to_grayscale(img),
    }
}

/// Thermal frame on the working grid, normalised to `[0, 255]`.
pub(crate) fn prepare_thermal(
    thermal: &Image,
    grid: (usize, usize),
    normalize_first: bool,
) -> Result<Image> {
    if normalize_first {
        resample_bilinear(&min_max_normalize(thermal), grid.0, grid.1)
    } else {
        Ok(min_max_normalize(&resample_bilinear(
            thermal, grid.0, grid.1,
        )?))
    }
}

/// Full pipeline: upsample, register visual to thermal, guided filter, clip.
pub fn rgif_fuse(thermal: &Image, visual: &Image, cfg: &RgifConfig) -> Result<RgifOutput> {
    cfg.validate()?;
    thermal.expect_channels(1)?;
    let (tw, th) = thermal.dims();
    let grid = working_grid(tw, th, cfg.upsample_factor);

    let t = prepare_thermal(thermal, grid, cfg.normalize_before_upsample)?;
    // Luminance before resizing: both steps are linear, so the order only
    // changes the cost.
    let v = resample_bilinear(&luminance(visual)?, grid.0, grid.1)?;

    let reg = register(&t, &v, &cfg.registration)?;
    let q = guided_filter(&reg.image, &t, &cfg.guided)?.clamp(0.0, 255.0);
    let fused = if cfg.output_at_native_thermal_grid {
        resample_bilinear(&q, tw, th)?
    } else {
        q
    };
    Ok(RgifOutput {
        fused,
        used_fallback: reg.used_fallback,
        correlation: reg.correlation,
        iterations: reg.iterations,
    })
}
