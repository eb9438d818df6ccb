//! PNG (and JPEG) input, 8-bit PNG output.
//!
//! 16-bit single-channel inputs are min-max normalised to `[0, 255]` at load.
//! Output quantisation clamps to `[0, 255]` and rounds half away from zero.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};

use super::{min_max_normalize, Image};
use crate::error::{Error, Result};

pub fn load(path: impl AsRef<Path>) -> Result<Image> {
    from_dynamic(image::open(path)?)
}

pub fn decode(bytes: &[u8]) -> Result<Image> {
    from_dynamic(image::load_from_memory(bytes)?)
}

fn from_dynamic(img: DynamicImage) -> Result<Image> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(g) => {
            Image::from_vec(w, h, 1, g.into_raw().into_iter().map(f64::from).collect())
        }
        DynamicImage::ImageLuma16(g) => {
            let raw = Image::from_vec(w, h, 1, g.into_raw().into_iter().map(f64::from).collect())?;
            Ok(min_max_normalize(&raw))
        }
        DynamicImage::ImageLumaA8(_) => from_dynamic(DynamicImage::ImageLuma8(img.to_luma8())),
        DynamicImage::ImageLumaA16(_) => from_dynamic(DynamicImage::ImageLuma16(img.to_luma16())),
        other => {
            let rgb = other.to_rgb8();
            let n = w * h;
            let mut data = vec![0.0; 3 * n];
            for (i, px) in rgb.pixels().enumerate() {
                data[i] = f64::from(px[0]);
                data[n + i] = f64::from(px[1]);
                data[2 * n + i] = f64::from(px[2]);
            }
            Image::from_vec(w, h, 3, data)
        }
    }
}

/// Quantises one sample to 8 bits.
#[inline]
pub fn quantize(v: f64) -> u8 {
    v.clamp(0.0, 255.0).round() as u8
}

/// Interleaved 8-bit samples (`GRAY` or `RGB` order).
pub fn to_u8_interleaved(img: &Image) -> Vec<u8> {
    let n = img.pixel_count();
    let c = img.channels();
    let mut out = vec![0u8; n * c];
    for ch in 0..c {
        for (i, &v) in img.plane(ch).iter().enumerate() {
            out[i * c + ch] = quantize(v);
        }
    }
    out
}

/// Builds an image from interleaved 8-bit samples.
pub fn from_u8_interleaved(
    width: usize,
    height: usize,
    channels: usize,
    bytes: &[u8],
) -> Result<Image> {
    if bytes.len() != width * height * channels {
        return Err(Error::InvalidDimension(format!(
            "{} bytes for {width}x{height}x{channels}",
            bytes.len()
        )));
    }
    let n = width * height;
    let mut data = vec![0.0; bytes.len()];
    for (i, px) in bytes.chunks_exact(channels.max(1)).enumerate() {
        for (c, &b) in px.iter().enumerate() {
            data[c * n + i] = f64::from(b);
        }
    }
    Image::from_vec(width, height, channels, data)
}

fn to_dynamic(img: &Image) -> Result<DynamicImage> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let raw = to_u8_interleaved(img);
    let bad = || Error::InvalidDimension("buffer size".into());
    Ok(match img.channels() {
        1 => DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, raw).ok_or_else(bad)?),
        _ => DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, raw).ok_or_else(bad)?),
    })
}

pub fn save_png(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    to_dynamic(img)?.save_with_format(path, ImageFormat::Png)?;
    Ok(())
}

pub fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    to_dynamic(img)?.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantization_rounds_half_away_and_clamps() {
        assert_eq!(quantize(0.5), 1);
        assert_eq!(quantize(1.49), 1);
        assert_eq!(quantize(254.5), 255);
        assert_eq!(quantize(-3.0), 0);
        assert_eq!(quantize(300.0), 255);
    }

    #[test]
    fn png_round_trip_gray_and_rgb() {
        let dir = tempfile::tempdir().unwrap();
        let gray = Image::from_fn(5, 3, |x, y| (x * 40 + y) as f64).unwrap();
        let p = dir.path().join("g.png");
        save_png(&gray, &p).unwrap();
        assert_eq!(load(&p).unwrap(), gray);

        let rgb = Image::from_vec(2, 1, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let bytes = encode_png(&rgb).unwrap();
        assert_eq!(decode(&bytes).unwrap(), rgb);
    }

    #[test]
    fn sixteen_bit_input_is_normalized() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t16.png");
        let buf =
            image::ImageBuffer::<image::Luma<u16>, _>::from_raw(3, 1, vec![1000u16, 3000, 5000])
                .unwrap();
        buf.save(&p).unwrap();
        assert_eq!(load(&p).unwrap().data(), &[0.0, 127.5, 255.0]);
    }

    #[test]
    fn interleaved_round_trip() {
        let img = from_u8_interleaved(2, 1, 3, &[1, 2, 3, 4, 5, 6]).unwrap();
        assert_eq!(img.plane(0), &[1.0, 4.0]);
        assert_eq!(to_u8_interleaved(&img), vec![1, 2, 3, 4, 5, 6]);
        assert!(from_u8_interleaved(2, 2, 3, &[0; 3]).is_err());
    }
}
