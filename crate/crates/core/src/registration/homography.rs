use nalgebra::{SMatrix, SymmetricEigen};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{detect_and_describe, match_descriptors};
use super::Homography;
use crate::error::{Error, Result};
use crate::imgcore::Image;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    pub max_iterations: usize,
    /// Inlier reprojection threshold in pixels.
    pub threshold: f64,
    /// Stop early once this confidence of an outlier-free sample is reached.
    pub confidence: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            threshold: 3.0,
            confidence: 0.995,
            seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0
            || !(self.threshold > 0.0)
            || !(0.0..1.0).contains(&self.confidence)
        {
            return Err(Error::InvalidConfig(
                "ransac needs iterations >= 1, threshold > 0, confidence in [0,1)".into(),
            ));
        }
        Ok(())
    }
}

type Point = (f64, f64);

/// Matches corners between `a` and `b` and fits the homography taking
/// points of `a` onto `b`.
pub fn feature_homography(a: &Image, b: &Image, cfg: &RansacConfig) -> Result<Homography> {
    cfg.validate()?;
    let fa = detect_and_describe(a)?;
    let fb = detect_and_describe(b)?;
    let da: Vec<_> = fa.iter().map(|f| f.1).collect();
    let db: Vec<_> = fb.iter().map(|f| f.1).collect();
    let matches = match_descriptors(&da, &db);
    let src: Vec<Point> = matches
        .iter()
        .map(|&(i, _)| (fa[i].0.x, fa[i].0.y))
        .collect();
    let dst: Vec<Point> = matches
        .iter()
        .map(|&(_, j)| (fb[j].0.x, fb[j].0.y))
        .collect();
    ransac_homography(&src, &dst, cfg).map(|(h, _)| h)
}

/// Robust fit with a seeded sampler. Returns the model refitted on its
/// inliers and the inlier flags; fewer than four inliers is
/// [`Error::InsufficientMatches`].
pub fn ransac_homography(
    src: &[Point],
    dst: &[Point],
    cfg: &RansacConfig,
) -> Result<(Homography, Vec<bool>)> {
    let n = src.len().min(dst.len());
    if n < 4 {
        return Err(Error::InsufficientMatches { inliers: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let thresh2 = cfg.threshold * cfg.threshold;
    let mut best: Option<(usize, Vec<bool>)> = None;
    let mut needed = cfg.max_iterations;
    let mut iter = 0;
    while iter < needed.min(cfg.max_iterations) {
        iter += 1;
        let idx = sample(&mut rng, n, 4).into_vec();
        let s: Vec<Point> = idx.iter().map(|&i| src[i]).collect();
        let d: Vec<Point> = idx.iter().map(|&i| dst[i]).collect();
        if degenerate(&s) || degenerate(&d) {
            continue;
        }
        let Some(h) = fit_homography(&s, &d) else {
            continue;
        };
        let flags = inliers(&h, src, dst, thresh2);
        let count = flags.iter().filter(|&&f| f).count();
        if best.as_ref().is_none_or(|(c, _)| count > *c) {
            let ratio = count as f64 / n as f64;
            let fail = 1.0 - ratio.powi(4);
            if fail <= f64::EPSILON {
                needed = iter;
            } else if fail < 1.0 {
                needed = ((1.0 - cfg.confidence).ln() / fail.ln()).ceil() as usize;
            }
            best = Some((count, flags));
        }
    }
    let (count, mut flags) = best.ok_or(Error::InsufficientMatches { inliers: 0 })?;
    if count < 4 {
        return Err(Error::InsufficientMatches { inliers: count });
    }
    let mut model = None;
    for _ in 0..3 {
        let (s, d): (Vec<Point>, Vec<Point>) = flags
            .iter()
            .enumerate()
            .filter(|(_, &f)| f)
            .map(|(i, _)| (src[i], dst[i]))
            .unzip();
        let Some(h) = fit_homography(&s, &d) else {
            break;
        };
        let refined = inliers(&h, src, dst, thresh2);
        let stable = refined == flags;
        flags = refined;
        model = Some(h);
        if stable {
            break;
        }
    }
    let count = flags.iter().filter(|&&f| f).count();
    match model {
        Some(h) if count >= 4 => Ok((h, flags)),
        _ => Err(Error::InsufficientMatches { inliers: count }),
    }
}

fn inliers(h: &Homography, src: &[Point], dst: &[Point], thresh2: f64) -> Vec<bool> {
    src.iter()
        .zip(dst)
        .map(|(&(x, y), &(u, v))| {
            let (px, py) = h.apply(x, y);
            let e = (px - u).powi(2) + (py - v).powi(2);
            e.is_finite() && e <= thresh2
        })
        .collect()
}

/// Any three of the four points (nearly) collinear.
fn degenerate(p: &[Point]) -> bool {
    let area = |a: Point, b: Point, c: Point| {
        ((b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)).abs()
    };
    let combos = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)];
    combos.iter().any(|&(i, j, k)| area(p[i], p[j], p[k]) < 1.0)
}

/// Similarity moving the centroid to the origin with mean distance sqrt(2).
fn normalizer(p: &[Point]) -> Option<[f64; 3]> {
    let n = p.len() as f64;
    let cx = p.iter().map(|q| q.0).sum::<f64>() / n;
    let cy = p.iter().map(|q| q.1).sum::<f64>() / n;
    let mean = p.iter().map(|q| (q.0 - cx).hypot(q.1 - cy)).sum::<f64>() / n;
    (mean > 1e-12).then(|| {
        let s = std::f64::consts::SQRT_2 / mean;
        [s, -s * cx, -s * cy]
    })
}

/// Normalised direct linear transform over all correspondences (at least four).
pub fn fit_homography(src: &[Point], dst: &[Point]) -> Option<Homography> {
    if src.len() < 4 || src.len() != dst.len() {
        return None;
    }
    let ns = normalizer(src)?;
    let nd = normalizer(dst)?;
    let mut ata = SMatrix::<f64, 9, 9>::zeros();
    for (&(x, y), &(u, v)) in src.iter().zip(dst) {
        let (x, y) = (ns[0] * x + ns[1], ns[0] * y + ns[2]);
        let (u, v) = (nd[0] * u + nd[1], nd[0] * v + nd[2]);
        let r1 = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
        let r2 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        for row in [r1, r2] {
            for i in 0..9 {
                for j in 0..9 {
                    ata[(i, j)] += row[i] * row[j];
                }
            }
        }
    }
    let eig = SymmetricEigen::new(ata);
    let (k, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let hn = eig.eigenvectors.column(k);
    // H = Nd^-1 * Hn * Ns
    let hn = SMatrix::<f64, 3, 3>::from_fn(|r, c| hn[r * 3 + c]);
    let ns_m = SMatrix::<f64, 3, 3>::new(ns[0], 0.0, ns[1], 0.0, ns[0], ns[2], 0.0, 0.0, 1.0);
    let nd_inv = SMatrix::<f64, 3, 3>::new(
        1.0 / nd[0],
        0.0,
        -nd[1] / nd[0],
        0.0,
        1.0 / nd[0],
        -nd[2] / nd[0],
        0.0,
        0.0,
        1.0,
    );
    let h = nd_inv * hn * ns_m;
    let flat: [f64; 9] = std::array::from_fn(|i| h[(i / 3, i % 3)]);
    Homography::new(flat).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registration::warp_perspective;
    use crate::synthetic::textured;

    fn truth() -> Homography {
        Homography::new([1.02, 0.03, 4.0, -0.02, 0.99, -3.0, 4e-5, -3e-5, 1.0]).unwrap()
    }

    #[test]
    fn dlt_recovers_exact_correspondences() {
        let h = truth();
        let src: Vec<Point> = [
            (0.0, 0.0),
            (100.0, 5.0),
            (90.0, 120.0),
            (3.0, 80.0),
            (50.0, 50.0),
        ]
        .to_vec();
        let dst: Vec<Point> = src.iter().map(|&(x, y)| h.apply(x, y)).collect();
        let fit = fit_homography(&src, &dst).unwrap();
        assert!(fit.mean_corner_error(&h, 128, 128) < 1e-6);
    }

    #[test]
    fn ransac_rejects_outliers() {
        let h = truth();
        let mut src = Vec::new();
        let mut dst = Vec::new();
        for i in 0..40 {
            let p = ((i * 37 % 200) as f64, (i * 53 % 180) as f64);
            src.push(p);
            dst.push(h.apply(p.0, p.1));
        }
        for i in 0..15 {
            src.push(((i * 11) as f64, (i * 7) as f64));
            dst.push(((i * 29 % 150) as f64, (i * 3) as f64 + 90.0));
        }
        let (fit, flags) = ransac_homography(&src, &dst, &RansacConfig::default()).unwrap();
        assert!(flags[..40].iter().all(|&f| f));
        assert!(fit.mean_corner_error(&h, 200, 180) < 1e-6);
    }

    #[test]
    fn too_few_points() {
        let p = vec![(0.0, 0.0); 3];
        assert!(matches!(
            ransac_homography(&p, &p, &RansacConfig::default()),
            Err(Error::InsufficientMatches { inliers: 3 })
        ));
    }

    #[test]
    fn self_match_gives_identity() {
        let img = textured(200, 200, 11, 2.5);
        let h = feature_homography(&img, &img, &RansacConfig::default()).unwrap();
        assert!(h.max_param_diff(&Homography::IDENTITY) < 1e-2, "{h:?}");
    }

    #[test]
    fn synthetic_perspective_recovered() {
        let img = textured(256, 256, 21, 2.5);
        let h = truth();
        let b = warp_perspective(&img, &h, 256, 256).unwrap().image;
        let fit = feature_homography(&img, &b, &RansacConfig::default()).unwrap();
        let err = fit.mean_corner_error(&h, 256, 256);
        assert!(err < 1.0, "corner error {err}");
    }

    #[test]
    fn flat_image_has_insufficient_matches() {
        let flat = Image::filled(128, 128, 1, 9.0).unwrap();
        assert!(matches!(
            feature_homography(&flat, &flat, &RansacConfig::default()),
            Err(Error::InsufficientMatches { .. })
        ));
    }
}
