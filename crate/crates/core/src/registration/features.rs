//! Harris corners with intensity-centroid orientation and a 256-bit rotated
//! BRIEF descriptor, matched by Hamming distance.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::imgcore::{filter, gaussian, gradient, sample_bilinear, Image, KernelSpec};

const MAX_FEATURES: usize = 600;
const HARRIS_K: f64 = 0.04;
const NMS_RADIUS: usize = 3;
const RESPONSE_RATIO: f64 = 1e-3;
const PATCH_RADIUS: i32 = 15;
/// Rotated sampling offsets reach at most `PATCH_RADIUS * sqrt(2)`.
const BORDER: usize = 23;
const MAX_HAMMING: u32 = 80;
const RATIO: f64 = 0.85;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub response: f64,
    /// Orientation in radians.
    pub angle: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Descriptor(pub [u64; 4]);

impl Descriptor {
    pub fn hamming(&self, other: &Descriptor) -> u32 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }
}

/// Fixed test-pair pattern, drawn once from an isotropic Gaussian clipped to
/// the patch.
fn pattern() -> &'static [(f64, f64, f64, f64); 256] {
    static PATTERN: OnceLock<[(f64, f64, f64, f64); 256]> = OnceLock::new();
    PATTERN.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(0x0b1e_f00d);
        let sigma = (2 * PATCH_RADIUS + 1) as f64 / 5.0;
        let limit = PATCH_RADIUS as f64;
        let mut draw = || loop {
            // Box-Muller
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            let v = sigma * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
            if v.abs() <= limit {
                break v.round();
            }
        };
        let mut out = [(0.0, 0.0, 0.0, 0.0); 256];
        for p in out.iter_mut() {
            *p = (draw(), draw(), draw(), draw());
        }
        out
    })
}

/// Detects up to a few hundred corners and describes them.
pub fn detect_and_describe(img: &Image) -> Result<Vec<(Keypoint, Descriptor)>> {
    img.expect_channels(1)?;
    let (w, h) = img.dims();
    if w <= 2 * BORDER || h <= 2 * BORDER {
        return Ok(Vec::new());
    }
    let smooth = gaussian(img, 1.0)?;
    let response = harris(&smooth)?;
    let mut kps = non_max_suppress(&response, w, h);
    let desc_src = filter(img, KernelSpec::Box { radius: 2 })?;
    Ok(kps
        .drain(..)
        .map(|mut kp| {
            kp.angle = orientation(&smooth, kp.x.round() as i32, kp.y.round() as i32);
            (kp, describe(&desc_src, &kp))
        })
        .collect())
}

fn harris(img: &Image) -> Result<Vec<f64>> {
    let (gx, gy) = gradient(img)?;
    let (w, h) = img.dims();
    let xx = gx.zip_map(&gx, |a, b| a * b)?;
    let yy = gy.zip_map(&gy, |a, b| a * b)?;
    let xy = gx.zip_map(&gy, |a, b| a * b)?;
    let k = KernelSpec::gaussian(1.5);
    let (sxx, syy, sxy) = (filter(&xx, k)?, filter(&yy, k)?, filter(&xy, k)?);
    let mut r = vec![0.0; w * h];
    for (i, v) in r.iter_mut().enumerate() {
        let (a, b, c) = (sxx.data()[i], syy.data()[i], sxy.data()[i]);
        *v = a * b - c * c - HARRIS_K * (a + b) * (a + b);
    }
    Ok(r)
}

fn non_max_suppress(r: &[f64], w: usize, h: usize) -> Vec<Keypoint> {
    let max = r.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let thresh = max * RESPONSE_RATIO;
    let mut out = Vec::new();
    for y in BORDER..h - BORDER {
        for x in BORDER..w - BORDER {
            let v = r[y * w + x];
            if v <= thresh {
                continue;
            }
            let mut is_max = true;
            'win: for yy in y - NMS_RADIUS..=y + NMS_RADIUS {
                for xx in x - NMS_RADIUS..=x + NMS_RADIUS {
                    let o = r[yy * w + xx];
                    // Strict on one side breaks plateaus deterministically.
                    if o > v || (o == v && (yy, xx) < (y, x)) {
                        is_max = false;
                        break 'win;
                    }
                }
            }
            if !is_max {
                continue;
            }
            let sub = |m: f64, c: f64, p: f64| {
                let den = m - 2.0 * c + p;
                if den < 0.0 {
                    (0.5 * (m - p) / den).clamp(-0.5, 0.5)
                } else {
                    0.0
                }
            };
            let dx = sub(r[y * w + x - 1], v, r[y * w + x + 1]);
            let dy = sub(r[(y - 1) * w + x], v, r[(y + 1) * w + x]);
            out.push(Keypoint {
                x: x as f64 + dx,
                y: y as f64 + dy,
                response: v,
                angle: 0.0,
            });
        }
    }
    out.sort_by(|a, b| b.response.total_cmp(&a.response));
    out.truncate(MAX_FEATURES);
    out
}

/// Intensity-centroid orientation over a disc of radius `PATCH_RADIUS`.
fn orientation(img: &Image, cx: i32, cy: i32) -> f64 {
    let (mut m10, mut m01) = (0.0, 0.0);
    for dy in -PATCH_RADIUS..=PATCH_RADIUS {
        for dx in -PATCH_RADIUS..=PATCH_RADIUS {
            if dx * dx + dy * dy > PATCH_RADIUS * PATCH_RADIUS {
                continue;
            }
            let v = img.get((cx + dx) as usize, (cy + dy) as usize);
            m10 += dx as f64 * v;
            m01 += dy as f64 * v;
        }
    }
    m01.atan2(m10)
}

fn describe(img: &Image, kp: &Keypoint) -> Descriptor {
    let (s, c) = kp.angle.sin_cos();
    let (w, h) = img.dims();
    let src = img.data();
    let at = |dx: f64, dy: f64| {
        let x = kp.x + c * dx - s * dy;
        let y = kp.y + s * dx + c * dy;
        sample_bilinear(src, w, h, x, y)
    };
    let mut bits = [0u64; 4];
    for (i, &(x1, y1, x2, y2)) in pattern().iter().enumerate() {
        if at(x1, y1) < at(x2, y2) {
            bits[i / 64] |= 1 << (i % 64);
        }
    }
    Descriptor(bits)
}

/// Mutual nearest neighbours that pass a distance ratio test. Returns index
/// pairs `(i_a, i_b)`.
pub fn match_descriptors(a: &[Descriptor], b: &[Descriptor]) -> Vec<(usize, usize)> {
    let best = |from: &[Descriptor], to: &[Descriptor]| -> Vec<Option<(usize, u32, u32)>> {
        from.iter()
            .map(|d| {
                let mut first = (usize::MAX, u32::MAX);
                let mut second = u32::MAX;
                for (j, e) in to.iter().enumerate() {
                    let dist = d.hamming(e);
                    if dist < first.1 {
                        second = first.1;
                        first = (j, dist);
                    } else if dist < second {
                        second = dist;
                    }
                }
                (first.0 != usize::MAX).then_some((first.0, first.1, second))
            })
            .collect()
    };
    let ab = best(a, b);
    let ba = best(b, a);
    ab.iter()
        .enumerate()
        .filter_map(|(i, m)| {
            let (j, d1, d2) = (*m)?;
            let mutual = ba[j].map(|(k, _, _)| k == i).unwrap_or(false);
            let distinct = d2 == u32::MAX || (d1 as f64) < RATIO * d2 as f64;
            (mutual && distinct && d1 <= MAX_HAMMING).then_some((i, j))
        })
        .collect()
}
