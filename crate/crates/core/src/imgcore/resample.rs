use super::Image;
use crate::error::{Error, Result};

/// Bilinear resize with edge-replicate borders.
///
/// Sample grid: destination pixel `x` reads source coordinate
/// `x * src_w / dst_w`, so pixel (0, 0) stays anchored and an integer
/// upscale followed by the matching integer downscale returns the original
/// samples.
pub fn resample_bilinear(img: &Image, new_w: usize, new_h: usize) -> Result<Image> {
    if new_w == 0 || new_h == 0 {
        return Err(Error::InvalidDimension(format!(
            "target {new_w}x{new_h} has no pixels"
        )));
    }
    let (w, h) = img.dims();
    if (w, h) == (new_w, new_h) {
        return Ok(img.clone());
    }
    let sx = w as f64 / new_w as f64;
    let sy = h as f64 / new_h as f64;
    let cols: Vec<(usize, usize, f64)> = (0..new_w).map(|x| taps(x as f64 * sx, w)).collect();

    let mut out = vec![0.0; new_w * new_h * img.channels()];
    for c in 0..img.channels() {
        let src = img.plane(c);
        let dst = &mut out[c * new_w * new_h..(c + 1) * new_w * new_h];
        for y in 0..new_h {
            let (y0, y1, fy) = taps(y as f64 * sy, h);
            let r0 = &src[y0 * w..(y0 + 1) * w];
            let r1 = &src[y1 * w..(y1 + 1) * w];
            let row = &mut dst[y * new_w..(y + 1) * new_w];
            for (d, &(x0, x1, fx)) in row.iter_mut().zip(&cols) {
                let top = r0[x0] + fx * (r0[x1] - r0[x0]);
                let bottom = r1[x0] + fx * (r1[x1] - r1[x0]);
                *d = top + fy * (bottom - top);
            }
        }
    }
    Ok(Image::from_raw(new_w, new_h, img.channels(), out))
}

/// Neighbouring indices and fractional weight for a coordinate, clamped to
/// `[0, len - 1]`.
#[inline]
pub(crate) fn taps(pos: f64, len: usize) -> (usize, usize, f64) {
    let last = (len - 1) as f64;
    let p = pos.clamp(0.0, last);
    let i0 = p.floor() as usize;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, p - i0 as f64)
}

/// Bilinear lookup in a single plane with edge-replicate clamping.
#[inline]
pub fn sample_bilinear(plane: &[f64], w: usize, h: usize, x: f64, y: f64) -> f64 {
    let (x0, x1, fx) = taps(x, w);
    let (y0, y1, fy) = taps(y, h);
    let a = plane[y0 * w + x0];
    let b = plane[y0 * w + x1];
    let c = plane[y1 * w + x0];
    let d = plane[y1 * w + x1];
    let top = a + fx * (b - a);
    let bottom = c + fx * (d - c);
    top + fy * (bottom - top)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct per-pixel bilinear interpolation written independently of the
    /// row/column tap tables.
    fn oracle(src: &[f64], w: usize, h: usize, nw: usize, nh: usize) -> Vec<f64> {
        let mut out = Vec::new();
        for y in 0..nh {
            for x in 0..nw {
                let fx = (x as f64 * w as f64 / nw as f64).min((w - 1) as f64);
                let fy = (y as f64 * h as f64 / nh as f64).min((h - 1) as f64);
                let mut acc = 0.0;
                for yy in 0..h {
                    for xx in 0..w {
                        let wx = (1.0 - (fx - xx as f64).abs()).max(0.0);
                        let wy = (1.0 - (fy - yy as f64).abs()).max(0.0);
                        acc += wx * wy * src[yy * w + xx];
                    }
                }
                out.push(acc);
            }
        }
        out
    }

    #[test]
    fn same_size_is_bit_identical() {
        let img = Image::from_fn(7, 5, |x, y| (x as f64).sin() * 100.0 + y as f64 / 3.0).unwrap();
        assert_eq!(resample_bilinear(&img, 7, 5).unwrap(), img);
    }

    #[test]
    fn constant_stays_constant() {
        let img = Image::filled(5, 3, 3, 0.3).unwrap();
        let out = resample_bilinear(&img, 17, 2).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.3));
    }

    #[test]
    fn two_pixel_upscale_matches_oracle() {
        let img = Image::from_vec(2, 1, 1, vec![0.0, 255.0]).unwrap();
        let out = resample_bilinear(&img, 4, 1).unwrap();
        let expect = oracle(img.data(), 2, 1, 4, 1);
        assert_eq!(expect, vec![0.0, 127.5, 255.0, 255.0]);
        for (a, b) in out.data().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
        for &v in &out.data()[1..3] {
            assert!((0.0..=255.0).contains(&v));
        }
    }

    #[test]
    fn integer_round_trip_is_exact() {
        let img = Image::from_fn(6, 4, |x, y| ((x * 31 + y * 17) % 23) as f64).unwrap();
        let up = resample_bilinear(&img, 12, 8).unwrap();
        let down = resample_bilinear(&up, 6, 4).unwrap();
        assert_eq!(down, img);
    }

    #[test]
    fn zero_target_rejected() {
        let img = Image::new(2, 2, 1).unwrap();
        assert!(matches!(
            resample_bilinear(&img, 0, 3),
            Err(Error::InvalidDimension(_))
        ));
    }

    proptest! {
        #[test]
        fn matches_oracle_and_stays_in_range(
            data in proptest::collection::vec(0.0f64..255.0, 12),
            nw in 1usize..10,
            nh in 1usize..10,
        ) {
            let img = Image::from_vec(4, 3, 1, data.clone()).unwrap();
            let out = resample_bilinear(&img, nw, nh).unwrap();
            let expect = oracle(&data, 4, 3, nw, nh);
            let (lo, hi) = img.min_max();
            for (a, b) in out.data().iter().zip(&expect) {
                prop_assert!((a - b).abs() < 1e-9);
                prop_assert!(*a >= lo - 1e-9 && *a <= hi + 1e-9);
            }
        }
    }
}
