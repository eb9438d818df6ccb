use super::Image;
use crate::error::Result;

/// BT.601 luma weights for R, G, B.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

const CR_SCALE: f64 = 2.0 * (1.0 - LUMA_WEIGHTS[0]); // 1.402
const CB_SCALE: f64 = 2.0 * (1.0 - LUMA_WEIGHTS[2]); // 1.772
const CHROMA_OFFSET: f64 = 128.0;

/// Weighted BT.601 luma of an RGB image.
pub fn to_grayscale(img: &Image) -> Result<Image> {
    img.expect_channels(3)?;
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    let [wr, wg, wb] = LUMA_WEIGHTS;
    let data = r
        .iter()
        .zip(g)
        .zip(b)
        .map(|((&r, &g), &b)| wr * r + wg * g + wb * b)
        .collect();
    Ok(Image::from_raw(img.width(), img.height(), 1, data))
}

/// Rescales all samples affinely onto `[0, 255]`. A constant image maps to
/// all zeros.
pub fn min_max_normalize(img: &Image) -> Image {
    let (lo, hi) = img.min_max();
    let range = hi - lo;
    if range <= 0.0 {
        return Image::from_raw(
            img.width(),
            img.height(),
            img.channels(),
            vec![0.0; img.data().len()],
        );
    }
    img.map(|v| (v - lo) / range * 255.0)
}

/// Full-range BT.601 RGB to YCrCb; channels of the result are `(Y, Cr, Cb)`
/// with chroma offset by 128.
pub fn ycrcb(img: &Image) -> Result<Image> {
    img.expect_channels(3)?;
    let n = img.pixel_count();
    let mut out = vec![0.0; 3 * n];
    let [wr, wg, wb] = LUMA_WEIGHTS;
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    for i in 0..n {
        let y = wr * r[i] + wg * g[i] + wb * b[i];
        out[i] = y;
        out[n + i] = (r[i] - y) / CR_SCALE + CHROMA_OFFSET;
        out[2 * n + i] = (b[i] - y) / CB_SCALE + CHROMA_OFFSET;
    }
    Ok(Image::from_raw(img.width(), img.height(), 3, out))
}

/// Exact inverse of [`ycrcb`].
pub fn ycrcb_inverse(img: &Image) -> Result<Image> {
    img.expect_channels(3)?;
    let n = img.pixel_count();
    let mut out = vec![0.0; 3 * n];
    let [wr, wg, wb] = LUMA_WEIGHTS;
    let (y, cr, cb) = (img.plane(0), img.plane(1), img.plane(2));
    for i in 0..n {
        let r = y[i] + CR_SCALE * (cr[i] - CHROMA_OFFSET);
        let b = y[i] + CB_SCALE * (cb[i] - CHROMA_OFFSET);
        out[i] = r;
        out[n + i] = (y[i] - wr * r - wb * b) / wg;
        out[2 * n + i] = b;
    }
    Ok(Image::from_raw(img.width(), img.height(), 3, out))
}
