use std::fmt::Write as _;
use std::path::Path;

use super::{AffineWarp, Homography, Mask};
use crate::error::{Error, Result};
use crate::evalbench::BoundingBox;
use crate::imgcore::{sample_bilinear, Image};

/// Tolerance for treating a sample coordinate as inside the source grid.
const BOUNDS_EPS: f64 = 1e-6;

/// A resampled image plus the pixels whose source location was in bounds.
#[derive(Clone, Debug)]
pub struct Warped {
    pub image: Image,
    pub valid: Mask,
}

/// Moves image content forward through `w`: the output at `p` is the input
/// at `w⁻¹(p)`. Out-of-bounds samples are 0 and flagged invalid.
pub fn warp_affine(img: &Image, w: &AffineWarp, out_w: usize, out_h: usize) -> Result<Warped> {
    let inv = w.inverse()?;
    Ok(warp_affine_sampled(img, &inv, out_w, out_h))
}

/// Output at `p` samples the input at `dst_to_src(p)`.
pub fn warp_affine_sampled(
    img: &Image,
    dst_to_src: &AffineWarp,
    out_w: usize,
    out_h: usize,
) -> Warped {
    resample_with(img, out_w, out_h, |x, y| dst_to_src.apply(x, y))
}

/// Projective counterpart of [`warp_affine`].
pub fn warp_perspective(img: &Image, h: &Homography, out_w: usize, out_h: usize) -> Result<Warped> {
    let inv = h.inverse()?;
    Ok(warp_perspective_sampled(img, &inv, out_w, out_h))
}

pub fn warp_perspective_sampled(
    img: &Image,
    dst_to_src: &Homography,
    out_w: usize,
    out_h: usize,
) -> Warped {
    resample_with(img, out_w, out_h, |x, y| dst_to_src.apply(x, y))
}

fn resample_with(
    img: &Image,
    out_w: usize,
    out_h: usize,
    map: impl Fn(f64, f64) -> (f64, f64),
) -> Warped {
    let (w, h) = img.dims();
    let (xmax, ymax) = ((w - 1) as f64 + BOUNDS_EPS, (h - 1) as f64 + BOUNDS_EPS);
    let n = out_w * out_h;
    let mut valid = vec![false; n];
    let mut coords = vec![(0.0, 0.0); n];
    for y in 0..out_h {
        for x in 0..out_w {
            let (sx, sy) = map(x as f64, y as f64);
            let i = y * out_w + x;
            if sx >= -BOUNDS_EPS && sy >= -BOUNDS_EPS && sx <= xmax && sy <= ymax {
                valid[i] = true;
                coords[i] = (sx, sy);
            }
        }
    }
    let mut data = vec![0.0; n * img.channels()];
    for c in 0..img.channels() {
        let src = img.plane(c);
        let dst = &mut data[c * n..(c + 1) * n];
        for i in 0..n {
            if valid[i] {
                let (sx, sy) = coords[i];
                dst[i] = sample_bilinear(src, w, h, sx, sy);
            }
        }
    }
    Warped {
        image: Image::from_raw(out_w, out_h, img.channels(), data),
        valid: Mask {
            width: out_w,
            height: out_h,
            valid,
        },
    }
}

/// Maps the four corners of `bbox` through `w` and returns their axis-aligned
/// envelope clipped to `[0, out_w] x [0, out_h]`.
pub fn transform_bbox(
    bbox: &BoundingBox,
    w: &AffineWarp,
    out_w: usize,
    out_h: usize,
) -> Result<BoundingBox> {
    let pts = bbox.corners().map(|(x, y)| w.apply(x, y));
    let fold = |f: fn(f64, f64) -> f64, init: f64, sel: fn(&(f64, f64)) -> f64| {
        pts.iter().map(sel).fold(init, f)
    };
    let xmin = fold(f64::min, f64::INFINITY, |p| p.0).max(0.0);
    let ymin = fold(f64::min, f64::INFINITY, |p| p.1).max(0.0);
    let xmax = fold(f64::max, f64::NEG_INFINITY, |p| p.0).min(out_w as f64);
    let ymax = fold(f64::max, f64::NEG_INFINITY, |p| p.1).min(out_h as f64);
    BoundingBox::new(xmin, ymin, xmax, ymax)
}

/// A serialisable geometric transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Warp {
    Affine(AffineWarp),
    Homography(Homography),
}

impl Warp {
    /// Row-major parameters separated by single spaces.
    pub fn to_line(&self) -> String {
        let params: &[f64] = match self {
            Warp::Affine(a) => &a.m,
            Warp::Homography(h) => &h.h,
        };
        params
            .iter()
            .map(|v| format!("{v}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn parse_line(line: &str, line_no: usize) -> Result<Warp> {
        let parse_err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let values = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| parse_err(format!("`{t}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        match values.len() {
            6 => Ok(Warp::Affine(
                AffineWarp::new(values.try_into().expect("six values"))
                    .map_err(|e| parse_err(e.to_string()))?,
            )),
            9 => Ok(Warp::Homography(Homography::new(
                values.try_into().expect("nine values"),
            )?)),
            n => Err(parse_err(format!("expected 6 or 9 values, found {n}"))),
        }
    }
}

/// One warp line with its optional `# fallback` marker.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpRecord {
    pub warp: Warp,
    pub fallback: bool,
    pub comment: Option<String>,
}

/// Writes one warp per line. Fallback records are preceded by `# fallback`.
pub fn write_warp_file(path: impl AsRef<Path>, records: &[WarpRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        if r.fallback {
            out.push_str("# fallback\n");
        }
        if let Some(c) = &r.comment {
            let _ = writeln!(out, "# {c}");
        }
        let _ = writeln!(out, "{}", r.warp.to_line());
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads warp lines, skipping blank lines; `#` comment lines are kept only
/// to attach a `fallback` marker to the next warp.
pub fn read_warp_file(path: impl AsRef<Path>) -> Result<Vec<WarpRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    let mut fallback = false;
    let mut comment = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if rest == "fallback" {
                fallback = true;
            } else {
                comment = Some(rest.to_string());
            }
            continue;
        }
        records.push(WarpRecord {
            warp: Warp::parse_line(line, i + 1)?,
            fallback,
            comment: comment.take(),
        });
        fallback = false;
    }
    Ok(records)
}
