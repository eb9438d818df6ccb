//! Deterministic synthetic scenes for tests, benchmarks and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imgcore::{gaussian, min_max_normalize, sample_bilinear, Image};
use crate::registration::AffineWarp;

/// Gaussian-smoothed uniform noise stretched to `[0, 255]`. `sigma` sets the
/// texture scale in pixels.
pub fn textured(width: usize, height: usize, seed: u64, sigma: f64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..width * height)
        .map(|_| rng.gen_range(0.0..255.0))
        .collect();
    let noise = Image::from_vec(width, height, 1, data).expect("valid shape");
    let smooth = if sigma > 0.0 {
        gaussian(&noise, sigma).expect("positive sigma")
    } else {
        noise
    };
    min_max_normalize(&smooth)
}

/// A thermal/visual pair sharing scene structure: the thermal frame is the
/// base texture plus a few warm blobs, the visual frame is an RGB rendering
/// of the same texture with mild per-channel gain and offset.
pub fn scene_pair(width: usize, height: usize, seed: u64) -> (Image, Image) {
    let base = textured(width, height, seed, 2.5);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let blobs: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.gen_range(0.2..0.8) * width as f64,
                rng.gen_range(0.2..0.8) * height as f64,
                rng.gen_range(4.0..10.0),
            )
        })
        .collect();
    let thermal = Image::from_fn(width, height, |x, y| {
        let warm: f64 = blobs
            .iter()
            .map(|&(cx, cy, r)| {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                60.0 * (-d2 / (2.0 * r * r)).exp()
            })
            .sum();
        (0.7 * base.get(x, y) + warm).min(255.0)
    })
    .expect("valid shape");

    let n = width * height;
    let mut rgb = vec![0.0; 3 * n];
    for (c, (gain, offset)) in [(0.9, 10.0), (1.0, 0.0), (0.8, 20.0)]
        .into_iter()
        .enumerate()
    {
        for i in 0..n {
            rgb[c * n + i] = (gain * base.data()[i] + offset).clamp(0.0, 255.0);
        }
    }
    let visual = Image::from_vec(width, height, 3, rgb).expect("valid shape");
    (thermal, visual)
}

/// A `(template, moving)` pair cut from one larger texture so that
/// `moving(warp(p)) == template(p)` holds with no fill at the borders.
/// `margin` must cover how far `warp` pushes the grid outside itself.
pub fn warped_crop_pair(
    size: usize,
    seed: u64,
    sigma: f64,
    warp: &AffineWarp,
    margin: usize,
) -> (Image, Image) {
    let big_side = size + 2 * margin;
    let big = textured(big_side, big_side, seed, sigma);
    let m = margin as f64;
    let moving =
        Image::from_fn(size, size, |x, y| big.get(x + margin, y + margin)).expect("valid shape");
    let template = Image::from_fn(size, size, |x, y| {
        let (sx, sy) = warp.apply(x as f64, y as f64);
        sample_bilinear(big.data(), big_side, big_side, sx + m, sy + m)
    })
    .expect("valid shape");
    (template, moving)
}
