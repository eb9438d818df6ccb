//! Reliability-gated modality-attention fusion.
//!
//! Per-pixel attention between the two modalities is computed from local
//! gradient energy, then the visual share is gated by how well the registered
//! visual frame agrees with the thermal one (local NCC times edge-direction
//! consistency). Only visual *detail* is injected into the thermal luminance,
//! and the result never falls below the thermal input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{box_mean_plane, gaussian, gradient, resample_bilinear, window_radius, Image};
use crate::registration::{register, Mask, RegistrationConfig};
use crate::rgif::luminance;

/// Patch variance below which NCC is defined as 0.
const NCC_VAR_FLOOR: f64 = 1e-9;
/// Gradient magnitude below which edge direction is undefined.
const EDGE_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RgmafConfig {
    /// Thermal bias added to the thermal logit.
    pub beta: f64,
    /// Softmax temperature.
    pub temperature: f64,
    pub energy_window: usize,
    pub ncc_window: usize,
    pub gate_smooth_sigma: f64,
    pub base_sigma: f64,
    /// Visual detail is clipped to this many standard deviations.
    pub detail_clip_k: f64,
    /// Width in pixels of the suppressed band around invalid warp regions.
    pub edge_band: usize,
    pub registration: RegistrationConfig,
}

impl Default for RgmafConfig {
    fn default() -> Self {
        Self {
            beta: 0.0,
            temperature: 1.0,
            energy_window: 11,
            ncc_window: 11,
            gate_smooth_sigma: 2.0,
            base_sigma: 4.0,
            detail_clip_k: 2.5,
            edge_band: 8,
            registration: RegistrationConfig::default(),
        }
    }
}

impl RgmafConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::InvalidTemperature(self.temperature));
        }
        window_radius(self.energy_window)?;
        window_radius(self.ncc_window)?;
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.gate_smooth_sigma)
            || !positive(self.base_sigma)
            || !positive(self.detail_clip_k)
        {
            return Err(Error::InvalidConfig(
                "gate_smooth_sigma, base_sigma and detail_clip_k must be > 0".into(),
            ));
        }
        if !self.beta.is_finite() {
            return Err(Error::InvalidConfig("beta must be finite".into()));
        }
        self.registration.validate()
    }
}

/// Per-pixel modality weights.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMaps {
    pub w_thermal: Image,
    pub w_visual: Image,
    /// `w_visual` after gating and warp-edge suppression.
    pub w_visual_gated: Image,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaseDetail {
    pub base: Image,
    pub detail: Image,
}

/// Windowed mean of `gx^2 + gy^2` before normalisation.
pub fn local_energy_raw(img: &Image, window: usize) -> Result<Image> {
    img.expect_channels(1)?;
    let r = window_radius(window)?;
    let (gx, gy) = gradient(img)?;
    let sq = gx.zip_map(&gy, |a, b| a * a + b * b)?;
    let (w, h) = img.dims();
    let mut out = vec![0.0; w * h];
    box_mean_plane(sq.data(), w, h, r, &mut out);
    Image::from_vec(w, h, 1, out)
}

/// [`local_energy_raw`] divided by its maximum; an all-zero map stays zero.
pub fn local_energy(img: &Image, window: usize) -> Result<Image> {
    let raw = local_energy_raw(img, window)?;
    let (_, max) = raw.min_max();
    Ok(if max > 0.0 {
        raw.map(|v| (v / max).clamp(0.0, 1.0))
    } else {
        raw.map(|_| 0.0)
    })
}

#[inline]
fn logistic(d: f64) -> f64 {
    if d >= 0.0 {
        1.0 / (1.0 + (-d).exp())
    } else {
        let e = d.exp();
        e / (1.0 + e)
    }
}

/// Two-way softmax of `(E_t + beta) / T` against `E_v / T`. The gated map
/// starts equal to `w_visual`.
pub fn attention_weights(
    e_t: &Image,
    e_v: &Image,
    beta: f64,
    temperature: f64,
) -> Result<WeightMaps> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::InvalidTemperature(temperature));
    }
    e_t.expect_same_grid(e_v)?;
    // Subtracting the larger logit leaves exactly the logistic of the difference.
    let w_thermal = e_t.zip_map(e_v, |t, v| logistic((t + beta - v) / temperature))?;
    let w_visual = w_thermal.map(|t| 1.0 - t);
    Ok(WeightMaps {
        w_thermal,
        w_visual_gated: w_visual.clone(),
        w_visual,
    })
}

/// Windowed zero-mean normalised cross-correlation in `[-1, 1]`; 0 where
/// either patch is flat.
pub fn local_ncc(a: &Image, b: &Image, window: usize) -> Result<Image> {
    a.expect_channels(1)?;
    b.expect_channels(1)?;
    a.expect_same_grid(b)?;
    let r = window_radius(window)?;
    let (w, h) = a.dims();
    let n = w * h;
    let (ca, cb) = (a.mean().round(), b.mean().round());
    let pa: Vec<f64> = a.data().iter().map(|v| v - ca).collect();
    let pb: Vec<f64> = b.data().iter().map(|v| v - cb).collect();
    let boxed = |f: &dyn Fn(usize) -> f64| {
        let src: Vec<f64> = (0..n).map(f).collect();
        let mut out = vec![0.0; n];
        box_mean_plane(&src, w, h, r, &mut out);
        out
    };
    let ma = boxed(&|i| pa[i]);
    let mb = boxed(&|i| pb[i]);
    let maa = boxed(&|i| pa[i] * pa[i]);
    let mbb = boxed(&|i| pb[i] * pb[i]);
    let mab = boxed(&|i| pa[i] * pb[i]);
    let out = (0..n)
        .map(|i| {
            let va = maa[i] - ma[i] * ma[i];
            let vb = mbb[i] - mb[i] * mb[i];
            if va < NCC_VAR_FLOOR || vb < NCC_VAR_FLOOR {
                return 0.0;
            }
            let cov = mab[i] - ma[i] * mb[i];
            (cov / (va * vb).sqrt()).clamp(-1.0, 1.0)
        })
        .collect();
    Image::from_vec(w, h, 1, out)
}

/// `|cos|` of the angle between the two gradients, times the ratio of the
/// smaller to the larger gradient magnitude. 0 where both are flat.
pub fn edge_consistency(a: &Image, b: &Image) -> Result<Image> {
    a.expect_channels(1)?;
    b.expect_channels(1)?;
    a.expect_same_grid(b)?;
    let (ax, ay) = gradient(a)?;
    let (bx, by) = gradient(b)?;
    let (w, h) = a.dims();
    let out = (0..w * h)
        .map(|i| {
            let (gax, gay, gbx, gby) = (ax.data()[i], ay.data()[i], bx.data()[i], by.data()[i]);
            let ma = gax.hypot(gay);
            let mb = gbx.hypot(gby);
            let big = ma.max(mb);
            if big < EDGE_FLOOR || ma.min(mb) == 0.0 {
                return 0.0;
            }
            let cos = ((gax * gbx + gay * gby) / (ma * mb)).abs().min(1.0);
            cos * ma.min(mb) / big
        })
        .collect();
    Image::from_vec(w, h, 1, out)
}

/// `clamp(smooth(max(ncc, 0) * cons), 0, 1)` with a Gaussian of `sigma`.
pub fn reliability_gate(ncc: &Image, cons: &Image, sigma: f64) -> Result<Image> {
    let prod = ncc.zip_map(cons, |n, c| n.max(0.0) * c)?;
    Ok(gaussian(&prod, sigma)?.clamp(0.0, 1.0))
}

pub fn base_detail(img: &Image, sigma: f64) -> Result<BaseDetail> {
    let base = gaussian(img, sigma)?;
    let detail = img.zip_map(&base, |v, b| v - b)?;
    Ok(BaseDetail { base, detail })
}

/// Zeroes `w` within `band` pixels (Chebyshev distance) of an invalid pixel.
fn suppress_warp_edges(w: &mut Image, valid: &Mask, band: usize) {
    if valid.all_valid() {
        return;
    }
    let (width, height) = w.dims();
    let invalid: Vec<f64> = valid
        .valid
        .iter()
        .map(|&v| if v { 0.0 } else { 1.0 })
        .collect();
    let mut near = vec![0.0; width * height];
    box_mean_plane(&invalid, width, height, band, &mut near);
    for (v, &n) in w.plane_mut(0).iter_mut().zip(&near) {
        if n > 0.0 {
            *v = 0.0;
        }
    }
}

/// Everything computed on the way to the fused frame.
#[derive(Clone, Debug)]
pub struct RgmafDiagnostics {
    pub weights: WeightMaps,
    pub reliability: Image,
    pub valid: Mask,
}

#[derive(Clone, Debug)]
pub struct RgmafOutput {
    /// Three identical channels on the thermal grid.
    pub fused: Image,
    /// Fused luminance before replication.
    pub luminance: Image,
    pub diagnostics: RgmafDiagnostics,
    pub used_fallback: bool,
}

/// Fuses on the thermal grid. The thermal frame is expected in `[0, 255]`.
pub fn rgmaf_fuse(thermal: &Image, visual: &Image, cfg: &RgmafConfig) -> Result<RgmafOutput> {
    cfg.validate()?;
    thermal.expect_channels(1)?;
    let (w, h) = thermal.dims();
    let i = thermal.clamp(0.0, 255.0);
    let v = resample_bilinear(&luminance(visual)?, w, h)?;
    let reg = register(&i, &v, &cfg.registration)?;
    let vw = reg.image;

    let e_t = local_energy(&i, cfg.energy_window)?;
    let e_v = local_energy(&vw, cfg.energy_window)?;
    let mut weights = attention_weights(&e_t, &e_v, cfg.beta, cfg.temperature)?;
    let ncc = local_ncc(&i, &vw, cfg.ncc_window)?;
    let cons = edge_consistency(&i, &vw)?;
    let reliability = reliability_gate(&ncc, &cons, cfg.gate_smooth_sigma)?;
    let mut gated = weights.w_visual.zip_map(&reliability, |a, b| a * b)?;
    suppress_warp_edges(&mut gated, &reg.valid, cfg.edge_band);
    weights.w_visual_gated = gated;

    let dv = base_detail(&vw, cfg.base_sigma)?.detail;
    let n = (w * h) as f64;
    let mean = dv.mean();
    let std = (dv.data().iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
    let lim = cfg.detail_clip_k * std;
    let dv_clip = dv.map(|d| d.clamp(-lim, lim));

    // B_I + D_I is I by construction; adding to I keeps that identity exact.
    let wg = weights.w_visual_gated.data();
    let yf: Vec<f64> = (0..w * h)
        .map(|k| {
            let t = i.data()[k];
            (t + wg[k] * dv_clip.data()[k]).max(t).clamp(0.0, 255.0)
        })
        .collect();
    let luminance = Image::from_vec(w, h, 1, yf)?;
    Ok(RgmafOutput {
        fused: luminance.replicate3()?,
        luminance,
        diagnostics: RgmafDiagnostics {
            weights,
            reliability,
            valid: reg.valid,
        },
        used_fallback: reg.used_fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalbench::{degrade, DegradeKind};
    use crate::imgcore::KernelSpec;
    use crate::synthetic::{scene_pair, textured};

    #[test]
    fn energy_examples() {
        let c = Image::filled(20, 20, 1, 9.0).unwrap();
        assert!(local_energy(&c, 11)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));

        let ramp = Image::from_fn(40, 40, |x, _| 3.0 * x as f64).unwrap();
        let raw = local_energy_raw(&ramp, 11).unwrap();
        // Window fully inside the region where central differences give 3.
        assert!((raw.get(20, 20) - 9.0).abs() < 1e-9);

        let step = Image::from_fn(41, 9, |x, _| if x < 20 { 0.0 } else { 100.0 }).unwrap();
        let e = local_energy(&step, 3).unwrap();
        assert!((e.get(20, 4) - 1.0).abs() < 1e-12);
        assert_eq!(e.get(2, 4), 0.0);
        assert_eq!(e.get(38, 4), 0.0);
    }

    #[test]
    fn attention_examples() {
        let a = Image::filled(4, 4, 1, 0.2).unwrap();
        let b = Image::filled(4, 4, 1, 0.8).unwrap();
        let wm = attention_weights(&a, &a, 0.0, 1.0).unwrap();
        assert!(wm.w_thermal.data().iter().all(|&v| v == 0.5));
        let wm = attention_weights(&a, &b, 20.0, 1.0).unwrap();
        assert!(wm.w_thermal.data().iter().all(|&v| v > 0.999));
        let wm = attention_weights(&a, &b, 0.0, 1.0).unwrap();
        let want = 1.0 / (1.0 + (-0.6f64).exp());
        assert!((wm.w_visual.get(0, 0) - want).abs() < 1e-12);
        assert!((want - 0.64566).abs() < 1e-5);
        assert!(matches!(
            attention_weights(&a, &b, 0.0, 0.0),
            Err(Error::InvalidTemperature(_))
        ));
    }

    #[test]
    fn ncc_examples() {
        let a = textured(32, 32, 1, 1.5);
        let self_ncc = local_ncc(&a, &a, 11).unwrap();
        assert!(self_ncc.data().iter().all(|&v| (v - 1.0).abs() < 1e-9));
        let m = a.mean();
        let flipped = a.map(|v| -(v - m) + m);
        let neg = local_ncc(&a, &flipped, 11).unwrap();
        assert!(neg.data().iter().all(|&v| (v + 1.0).abs() < 1e-9));
        let flat = Image::filled(32, 32, 1, 4.0).unwrap();
        assert!(local_ncc(&a, &flat, 11)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn edge_consistency_examples() {
        let a = textured(32, 32, 2, 1.5);
        let same = edge_consistency(&a, &a).unwrap();
        assert!(same
            .data()
            .iter()
            .all(|&v| v == 0.0 || (v - 1.0).abs() < 1e-12));
        assert!(same.mean() > 0.95);

        let f = |t: usize| (t as f64 * 0.3).sin() * 50.0;
        let fx = Image::from_fn(32, 32, |x, _| f(x)).unwrap();
        let fy = Image::from_fn(32, 32, |_, y| f(y)).unwrap();
        let rot = edge_consistency(&fx, &fy).unwrap();
        assert!(rot.data().iter().all(|&v| v.abs() < 1e-12));

        let c = Image::filled(8, 8, 1, 3.0).unwrap();
        assert!(edge_consistency(&c, &c)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn gate_examples() {
        let one = Image::filled(16, 16, 1, 1.0).unwrap();
        let zero = Image::filled(16, 16, 1, 0.0).unwrap();
        assert!(reliability_gate(&one, &one, 2.0)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 1.0));
        assert!(reliability_gate(&zero, &one, 2.0)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));

        let checker = Image::from_fn(24, 24, |x, y| ((x / 3 + y / 3) % 2) as f64).unwrap();
        let one24 = Image::filled(24, 24, 1, 1.0).unwrap();
        let r = reliability_gate(&checker, &one24, 2.0).unwrap();
        // Direct 2-D convolution with an explicitly built kernel.
        let KernelSpec::Gaussian { size, sigma } = KernelSpec::gaussian(2.0) else {
            unreachable!()
        };
        let half = (size / 2) as isize;
        let k1: Vec<f64> = (-half..=half)
            .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        let s: f64 = k1.iter().sum();
        for y in 0..24isize {
            for x in 0..24isize {
                let mut acc = 0.0;
                for dy in -half..=half {
                    for dx in -half..=half {
                        let xx = (x + dx).clamp(0, 23) as usize;
                        let yy = (y + dy).clamp(0, 23) as usize;
                        acc += k1[(dx + half) as usize] * k1[(dy + half) as usize] / (s * s)
                            * checker.get(xx, yy);
                    }
                }
                assert!((r.get(x as usize, y as usize) - acc).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn base_detail_reconstructs() {
        let a = textured(20, 20, 3, 0.0);
        let bd = base_detail(&a, 4.0).unwrap();
        let back = bd.base.zip_map(&bd.detail, |b, d| b + d).unwrap();
        assert!(back.max_abs_diff(&a).unwrap() < 1e-9);

        let c = Image::filled(10, 10, 1, 50.0).unwrap();
        let bd = base_detail(&c, 2.0).unwrap();
        assert!(bd.detail.data().iter().all(|&v| v == 0.0));

        let imp =
            Image::from_fn(21, 21, |x, y| if x == 10 && y == 10 { 1.0 } else { 0.0 }).unwrap();
        let bd = base_detail(&imp, 1.0).unwrap();
        let k = crate::imgcore::gaussian_weights(7, 1.0);
        assert!((bd.base.get(10, 10) - k[3] * k[3]).abs() < 1e-15);
        assert!((bd.base.get(12, 9) - k[5] * k[2]).abs() < 1e-15);
        assert!((bd.detail.get(10, 10) - (1.0 - k[3] * k[3])).abs() < 1e-15);
    }

    #[test]
    fn constant_visual_returns_thermal() {
        let t = textured(48, 48, 5, 2.0);
        let v = Image::filled(48, 48, 3, 90.0).unwrap();
        let out = rgmaf_fuse(&t, &v, &RgmafConfig::default()).unwrap();
        assert_eq!(out.luminance, t);
        for c in 0..3 {
            assert_eq!(out.fused.plane(c), t.data());
        }
    }

    #[test]
    fn never_darkens_and_weights_are_consistent() {
        let (t, v) = scene_pair(64, 64, 3);
        let out = rgmaf_fuse(&t, &v, &RgmafConfig::default()).unwrap();
        assert!(out
            .luminance
            .data()
            .iter()
            .zip(t.data())
            .all(|(f, i)| f >= i));
        let wm = &out.diagnostics.weights;
        for k in 0..64 * 64 {
            let s = wm.w_thermal.data()[k] + wm.w_visual.data()[k];
            assert!((s - 1.0).abs() < 1e-12);
            let g = wm.w_visual_gated.data()[k];
            assert!(g >= 0.0 && g <= wm.w_visual.data()[k]);
        }
        let (lo, hi) = out.diagnostics.reliability.min_max();
        assert!(lo >= 0.0 && hi <= 1.0);
    }

    #[test]
    fn degraded_visual_lowers_gated_weight() {
        let (t, v) = scene_pair(96, 96, 11);
        let clean = rgmaf_fuse(&t, &v, &RgmafConfig::default()).unwrap();
        let bad = rgmaf_fuse(
            &t,
            &degrade(&v, DegradeKind::Visual).unwrap(),
            &RgmafConfig::default(),
        )
        .unwrap();
        let g = |o: &RgmafOutput| o.diagnostics.weights.w_visual_gated.mean();
        assert!(g(&bad) < g(&clean), "{} vs {}", g(&bad), g(&clean));
    }

    #[test]
    fn warp_edge_band_is_suppressed() {
        let mut w = Image::filled(20, 20, 1, 1.0).unwrap();
        let mut valid = Mask::all(20, 20, true);
        for y in 0..20 {
            valid.valid[y * 20] = false;
        }
        suppress_warp_edges(&mut w, &valid, 3);
        assert_eq!(w.get(3, 5), 0.0);
        assert_eq!(w.get(4, 5), 1.0);
    }
}
