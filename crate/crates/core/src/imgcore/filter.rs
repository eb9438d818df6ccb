use super::{Image, KernelSpec};
use crate::error::{Error, Result};

/// Applies `kernel` to every channel with edge-replicate borders.
pub fn filter(img: &Image, kernel: KernelSpec) -> Result<Image> {
    kernel.validate()?;
    let (w, h) = img.dims();
    let mut out = img.clone();
    for c in 0..img.channels() {
        match kernel {
            KernelSpec::Box { radius } => {
                box_mean_plane(img.plane(c), w, h, radius, out.plane_mut(c))
            }
            KernelSpec::Gaussian { size, sigma } => {
                let weights = gaussian_weights(size, sigma);
                separable_plane(img.plane(c), w, h, &weights, out.plane_mut(c));
            }
        }
    }
    Ok(out)
}

/// Gaussian blur with the support chosen by [`KernelSpec::gaussian`].
pub fn gaussian(img: &Image, sigma: f64) -> Result<Image> {
    filter(img, KernelSpec::gaussian(sigma))
}

/// Sigma OpenCV uses for a Gaussian of odd `size` when none is given.
pub fn sigma_for_size(size: usize) -> f64 {
    0.3 * ((size as f64 - 1.0) * 0.5 - 1.0) + 0.8
}

/// Normalised 1-D Gaussian taps, centre at index `size / 2`.
pub fn gaussian_weights(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as isize;
    let mut w: Vec<f64> = (-half..=half)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

/// Windowed mean over `(2r+1)^2` pixels with edge-replicate borders, computed
/// with running sums in O(N) regardless of `r`.
pub fn box_mean_plane(src: &[f64], w: usize, h: usize, r: usize, out: &mut [f64]) {
    debug_assert_eq!(src.len(), w * h);
    debug_assert_eq!(out.len(), w * h);
    if r == 0 {
        out.copy_from_slice(src);
        return;
    }
    let norm = 1.0 / ((2 * r + 1) * (2 * r + 1)) as f64;
    let row = |y: isize| -> &[f64] {
        let y = y.clamp(0, h as isize - 1) as usize;
        &src[y * w..(y + 1) * w]
    };

    let mut col = vec![0.0; w];
    for dy in -(r as isize)..=(r as isize) {
        for (c, &v) in col.iter_mut().zip(row(dy)) {
            *c += v;
        }
    }
    for y in 0..h {
        let dst = &mut out[y * w..(y + 1) * w];
        horizontal_box(&col, r, norm, dst);
        if y + 1 < h {
            let add = row(y as isize + r as isize + 1);
            let sub = row(y as isize - r as isize);
            for ((c, &a), &s) in col.iter_mut().zip(add).zip(sub) {
                *c += a - s;
            }
        }
    }
}

#[inline]
fn horizontal_box(col: &[f64], r: usize, norm: f64, dst: &mut [f64]) {
    let w = col.len();
    let last = w - 1;
    let mut s = col[0] * (r + 1) as f64;
    for k in 1..=r {
        s += col[k.min(last)];
    }
    for x in 0..w {
        dst[x] = s * norm;
        s += col[(x + r + 1).min(last)] - col[x.saturating_sub(r)];
    }
}

/// Separable convolution with symmetric normalised taps. Each tap is applied
/// to the difference from the centre sample, so constant regions are
/// reproduced exactly.
fn separable_plane(src: &[f64], w: usize, h: usize, taps: &[f64], out: &mut [f64]) {
    let half = taps.len() / 2;
    let mut tmp = vec![0.0; w * h];
    let mut padded = vec![0.0; w + 2 * half];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for (i, p) in padded.iter_mut().enumerate() {
            *p = row[(i as isize - half as isize).clamp(0, w as isize - 1) as usize];
        }
        let dst = &mut tmp[y * w..(y + 1) * w];
        for x in 0..w {
            let centre = row[x];
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                acc += t * (padded[x + k] - centre);
            }
            dst[x] = centre + acc;
        }
    }
    for y in 0..h {
        let centre = &tmp[y * w..(y + 1) * w];
        let mut acc = vec![0.0; w];
        for (k, &t) in taps.iter().enumerate() {
            let yy = (y as isize + k as isize - half as isize).clamp(0, h as isize - 1) as usize;
            let other = &tmp[yy * w..(yy + 1) * w];
            for ((a, &o), &c) in acc.iter_mut().zip(other).zip(centre) {
                *a += t * (o - c);
            }
        }
        for ((d, &c), &a) in out[y * w..(y + 1) * w].iter_mut().zip(centre).zip(&acc) {
            *d = c + a;
        }
    }
}

/// Central differences in the interior, one-sided differences on the border
/// rows and columns. Returns `(gx, gy)`.
pub fn gradient(img: &Image) -> Result<(Image, Image)> {
    img.expect_channels(1)?;
    let (w, h) = img.dims();
    let src = img.data();
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    if w > 1 {
        for y in 0..h {
            let row = &src[y * w..(y + 1) * w];
            let g = &mut gx[y * w..(y + 1) * w];
            g[0] = row[1] - row[0];
            for x in 1..w - 1 {
                g[x] = (row[x + 1] - row[x - 1]) * 0.5;
            }
            g[w - 1] = row[w - 1] - row[w - 2];
        }
    }
    if h > 1 {
        for y in 0..h {
            let (up, down, scale) = match y {
                0 => (0, 1, 1.0),
                _ if y == h - 1 => (h - 2, h - 1, 1.0),
                _ => (y - 1, y + 1, 0.5),
            };
            for x in 0..w {
                gy[y * w + x] = (src[down * w + x] - src[up * w + x]) * scale;
            }
        }
    }
    Ok((Image::from_raw(w, h, 1, gx), Image::from_raw(w, h, 1, gy)))
}

/// Checks that a window is an odd size of at least 3 and returns its radius.
pub(crate) fn window_radius(window: usize) -> Result<usize> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::InvalidKernel(format!(
            "window {window} must be odd and >= 3"
        )));
    }
    Ok(window / 2)
}
