//! Laplacian-pyramid and Haar-wavelet fusion. Inputs are edge-padded to a
//! multiple of `2^levels` and the result is cropped back.

use crate::error::Result;
use crate::imgcore::Image;

/// Binomial taps used by both pyramid operators.
const TAPS: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// Single-plane buffer used internally.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Plane {
    pub w: usize,
    pub h: usize,
    pub d: Vec<f64>,
}

impl Plane {
    pub fn at(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.w as isize - 1) as usize;
        let y = y.clamp(0, self.h as isize - 1) as usize;
        self.d[y * self.w + x]
    }
}

pub(crate) fn pad(img: &Image, multiple: usize) -> Plane {
    let (w, h) = img.dims();
    let pw = w.div_ceil(multiple) * multiple;
    let ph = h.div_ceil(multiple) * multiple;
    let mut d = Vec::with_capacity(pw * ph);
    for y in 0..ph {
        for x in 0..pw {
            d.push(img.get(x.min(w - 1), y.min(h - 1)));
        }
    }
    Plane { w: pw, h: ph, d }
}

fn crop(p: &Plane, w: usize, h: usize) -> Result<Image> {
    Image::from_fn(w, h, |x, y| p.d[y * p.w + x])
}

fn blur_decimate(p: &Plane) -> Plane {
    let (w, h) = (p.w / 2, p.h / 2);
    let mut d = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for (j, ky) in TAPS.iter().enumerate() {
                for (i, kx) in TAPS.iter().enumerate() {
                    acc += ky * kx * p.at(2 * x + i as isize - 2, 2 * y + j as isize - 2);
                }
            }
            d.push(acc);
        }
    }
    Plane { w, h, d }
}

/// Zero-insertion upsampling followed by the binomial filter scaled by 4.
pub(crate) fn expand(p: &Plane, w: usize, h: usize) -> Plane {
    // Along one axis: even outputs take (1, 6, 1)/8, odd outputs (1, 1)/2.
    let phase = |o: isize| -> [(isize, f64); 3] {
        let i = o.div_euclid(2);
        if o % 2 == 0 {
            [(i - 1, 0.125), (i, 0.75), (i + 1, 0.125)]
        } else {
            [(i, 0.5), (i + 1, 0.5), (i, 0.0)]
        }
    };
    let mut d = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        let py = phase(y);
        for x in 0..w as isize {
            let px = phase(x);
            let mut acc = 0.0;
            for &(yy, wy) in &py {
                for &(xx, wx) in &px {
                    if wy != 0.0 && wx != 0.0 {
                        acc += wy * wx * p.at(xx, yy);
                    }
                }
            }
            d.push(acc);
        }
    }
    Plane { w, h, d }
}

/// Band-pass levels, finest first, followed by the low-pass residual.
pub(crate) fn laplacian_pyramid(p: &Plane, levels: usize) -> Vec<Plane> {
    let mut out = Vec::with_capacity(levels + 1);
    let mut g = p.clone();
    for _ in 0..levels {
        let next = blur_decimate(&g);
        let up = expand(&next, g.w, g.h);
        let band = g.d.iter().zip(&up.d).map(|(a, b)| a - b).collect();
        out.push(Plane {
            w: g.w,
            h: g.h,
            d: band,
        });
        g = next;
    }
    out.push(g);
    out
}

pub(crate) fn collapse(pyr: &[Plane]) -> Plane {
    let mut g = pyr.last().expect("non-empty pyramid").clone();
    for band in pyr[..pyr.len() - 1].iter().rev() {
        let up = expand(&g, band.w, band.h);
        g = Plane {
            w: band.w,
            h: band.h,
            d: band.d.iter().zip(&up.d).map(|(a, b)| a + b).collect(),
        };
    }
    g
}

/// Larger magnitude wins; ties keep `a`.
#[inline]
pub(crate) fn max_abs(a: f64, b: f64) -> f64 {
    if b.abs() > a.abs() {
        b
    } else {
        a
    }
}

fn combine(a: &Plane, b: &Plane, f: impl Fn(f64, f64) -> f64) -> Plane {
    Plane {
        w: a.w,
        h: a.h,
        d: a.d.iter().zip(&b.d).map(|(&x, &y)| f(x, y)).collect(),
    }
}

pub(crate) fn laplacian_fuse_planes(t: &Image, v: &Image, levels: usize) -> Result<Image> {
    t.expect_channels(1)?;
    v.expect_channels(1)?;
    t.expect_same_grid(v)?;
    let m = 1 << levels;
    let pt = laplacian_pyramid(&pad(t, m), levels);
    let pv = laplacian_pyramid(&pad(v, m), levels);
    let fused: Vec<Plane> = pt
        .iter()
        .zip(&pv)
        .enumerate()
        .map(|(k, (a, b))| {
            if k == levels {
                combine(a, b, |x, y| 0.5 * (x + y))
            } else {
                combine(a, b, max_abs)
            }
        })
        .collect();
    crop(&collapse(&fused), t.width(), t.height())
}

/// One orthonormal 2-D Haar step: returns `(LL, LH, HL, HH)` at half size.
/// `LH` holds horizontal differences, `HL` vertical ones.
pub(crate) fn haar_forward(p: &Plane) -> [Plane; 4] {
    let (w, h) = (p.w / 2, p.h / 2);
    let mut bands: [Vec<f64>; 4] = Default::default();
    for y in 0..h {
        for x in 0..w {
            let a = p.d[2 * y * p.w + 2 * x];
            let b = p.d[2 * y * p.w + 2 * x + 1];
            let c = p.d[(2 * y + 1) * p.w + 2 * x];
            let d = p.d[(2 * y + 1) * p.w + 2 * x + 1];
            bands[0].push((a + b + c + d) * 0.5);
            bands[1].push((a - b + c - d) * 0.5);
            bands[2].push((a + b - c - d) * 0.5);
            bands[3].push((a - b - c + d) * 0.5);
        }
    }
    bands.map(|d| Plane { w, h, d })
}

pub(crate) fn haar_inverse(b: &[Plane; 4]) -> Plane {
    let (w, h) = (b[0].w * 2, b[0].h * 2);
    let mut d = vec![0.0; w * h];
    for y in 0..b[0].h {
        for x in 0..b[0].w {
            let i = y * b[0].w + x;
            let (ll, lh, hl, hh) = (b[0].d[i], b[1].d[i], b[2].d[i], b[3].d[i]);
            d[2 * y * w + 2 * x] = (ll + lh + hl + hh) * 0.5;
            d[2 * y * w + 2 * x + 1] = (ll - lh + hl - hh) * 0.5;
            d[(2 * y + 1) * w + 2 * x] = (ll + lh - hl - hh) * 0.5;
            d[(2 * y + 1) * w + 2 * x + 1] = (ll - lh - hl + hh) * 0.5;
        }
    }
    Plane { w, h, d }
}

fn haar_fuse(a: &Plane, b: &Plane, levels: usize) -> Plane {
    let ba = haar_forward(a);
    let bb = haar_forward(b);
    let ll = if levels > 1 {
        haar_fuse(&ba[0], &bb[0], levels - 1)
    } else {
        combine(&ba[0], &bb[0], |x, y| 0.5 * (x + y))
    };
    haar_inverse(&[
        ll,
        combine(&ba[1], &bb[1], max_abs),
        combine(&ba[2], &bb[2], max_abs),
        combine(&ba[3], &bb[3], max_abs),
    ])
}

pub(crate) fn wavelet_fuse_planes(t: &Image, v: &Image, levels: usize) -> Result<Image> {
    t.expect_channels(1)?;
    v.expect_channels(1)?;
    t.expect_same_grid(v)?;
    let m = 1 << levels;
    let fused = haar_fuse(&pad(t, m), &pad(v, m), levels);
    crop(&fused, t.width(), t.height())
}
