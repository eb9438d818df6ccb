//! Enhanced-correlation-coefficient alignment with an affine motion model.
//!
//! Forward-additive Gauss-Newton on the zero-mean, unit-norm correlation
//! between the template and the moving image sampled through the warp,
//! run coarse to fine over a 2x2-average pyramid.

use nalgebra::{Matrix6, Vector6};

use super::{AffineWarp, RegistrationConfig};
use crate::error::Result;
use crate::imgcore::{filter, gradient, Image, KernelSpec};

/// Coarsest pyramid level keeps at least this many pixels on its short side.
const MIN_LEVEL_SIDE: usize = 16;
/// Pre-smoothing applied at every level before gradients are taken.
const SMOOTH_SIZE: usize = 5;
/// Per-pixel variance below which an image counts as textureless.
const TEXTURE_FLOOR: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct EccSolution {
    /// Template-to-moving sampling map.
    pub warp: AffineWarp,
    /// Correlation coefficient at `warp` on the finest level.
    pub correlation: f64,
    /// Iterations summed over all levels.
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NotConvergedReason {
    /// Zero-variance template or moving image.
    Textureless,
    /// The Gauss-Newton normal matrix is not positive definite.
    SingularSystem,
    /// The correlation would be minimised rather than maximised.
    NegativeCorrelation,
    /// Too few template pixels map inside the moving image.
    NoOverlap,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NotConverged {
    pub reason: NotConvergedReason,
    pub iterations: usize,
}

/// Outcome of [`ecc_align`]; failure to converge is an ordinary value.
#[derive(Clone, Debug, PartialEq)]
pub enum Alignment {
    Converged(EccSolution),
    NotConverged(NotConverged),
}

impl Alignment {
    pub fn warp(&self) -> Option<&AffineWarp> {
        match self {
            Alignment::Converged(s) => Some(&s.warp),
            Alignment::NotConverged(_) => None,
        }
    }

    pub fn is_converged(&self) -> bool {
        matches!(self, Alignment::Converged(_))
    }
}

/// Estimates the affine map `W` with `moving(W(p)) ≈ template(p)`, starting
/// from the identity. Both images must be single channel on the same grid.
pub fn ecc_align(template: &Image, moving: &Image, cfg: &RegistrationConfig) -> Result<Alignment> {
    ecc_align_from(template, moving, &AffineWarp::IDENTITY, cfg)
}

/// [`ecc_align`] from an explicit initial warp.
pub fn ecc_align_from(
    template: &Image,
    moving: &Image,
    initial: &AffineWarp,
    cfg: &RegistrationConfig,
) -> Result<Alignment> {
    template.expect_channels(1)?;
    moving.expect_channels(1)?;
    template.expect_same_grid(moving)?;
    cfg.validate()?;

    let mut skip = 0;
    let mut t = template.clone();
    let mut m = moving.clone();
    if cfg.max_estimation_side > 0 {
        while t.width().max(t.height()) > cfg.max_estimation_side
            && t.width().min(t.height()) / 2 >= MIN_LEVEL_SIDE
        {
            t = halve(&t);
            m = halve(&m);
            skip += 1;
        }
    }

    let mut levels = vec![(t, m)];
    while levels.len() < cfg.pyramid_levels {
        let (t, m) = levels.last().expect("non-empty");
        if t.width().min(t.height()) / 2 < MIN_LEVEL_SIDE {
            break;
        }
        let next = (halve(t), halve(m));
        levels.push(next);
    }

    let mut warp = *initial;
    for _ in 0..skip {
        warp = to_coarser(&warp);
    }
    let finest = Level::new(&levels[0].0, &levels[0].1)?;
    let start_rho = final_rho(&finest.moments(&warp));
    for _ in 1..levels.len() {
        warp = to_coarser(&warp);
    }

    let mut total_iterations = 0;
    let mut correlation = 0.0;
    for (k, (t, m)) in levels.iter().enumerate().rev() {
        let rebuilt;
        let level = if k == 0 {
            &finest
        } else {
            rebuilt = Level::new(t, m)?;
            &rebuilt
        };
        match level.solve(&mut warp, cfg.max_iterations, cfg.termination_eps) {
            Ok((rho, iters)) => {
                total_iterations += iters;
                correlation = rho;
            }
            Err(reason) => {
                return Ok(Alignment::NotConverged(NotConverged {
                    reason,
                    iterations: total_iterations,
                }))
            }
        }
        warp = to_finer(&warp);
    }
    // The loop lifted the finest estimate one level too far.
    warp = to_coarser(&warp);
    // Coarse levels can lead a multimodal pair away from a good start; keep
    // whichever of the start and the solution correlates better.
    if let Some(r0) = start_rho.filter(|&r0| correlation < r0) {
        return Ok(Alignment::Converged(EccSolution {
            warp: *initial,
            correlation: r0,
            iterations: total_iterations,
        }));
    }
    for _ in 0..skip {
        warp = to_finer(&warp);
    }

    Ok(Alignment::Converged(EccSolution {
        warp,
        correlation,
        iterations: total_iterations,
    }))
}

/// 2x2 average with floor dimensions; coarse pixel `i` is centred on fine
/// coordinate `2i + 0.5`.
fn halve(img: &Image) -> Image {
    let (w, h) = img.dims();
    let (nw, nh) = (w / 2, h / 2);
    let src = img.data();
    let mut out = vec![0.0; nw * nh];
    for y in 0..nh {
        let r0 = &src[2 * y * w..2 * y * w + w];
        let r1 = &src[(2 * y + 1) * w..(2 * y + 1) * w + w];
        for x in 0..nw {
            out[y * nw + x] = 0.25 * (r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]);
        }
    }
    Image::from_raw(nw, nh, 1, out)
}

/// Re-expresses a warp between adjacent pyramid levels (`fine = 2 coarse + 0.5`).
fn to_finer(w: &AffineWarp) -> AffineWarp {
    let m = &w.m;
    AffineWarp {
        m: [
            m[0],
            m[1],
            2.0 * m[2] + 0.5 * (1.0 - m[0] - m[1]),
            m[3],
            m[4],
            2.0 * m[5] + 0.5 * (1.0 - m[3] - m[4]),
        ],
    }
}

fn to_coarser(w: &AffineWarp) -> AffineWarp {
    let m = &w.m;
    AffineWarp {
        m: [
            m[0],
            m[1],
            (m[2] - 0.5 * (1.0 - m[0] - m[1])) * 0.5,
            m[3],
            m[4],
            (m[5] - 0.5 * (1.0 - m[3] - m[4])) * 0.5,
        ],
    }
}

struct Level {
    width: usize,
    height: usize,
    template: Vec<f64>,
    moving: Vec<f64>,
    gx: Vec<f64>,
    gy: Vec<f64>,
}

/// Sufficient statistics of one Gauss-Newton step.
#[derive(Default)]
struct Moments {
    n: f64,
    st: f64,
    sm: f64,
    stt: f64,
    smm: f64,
    stm: f64,
    sg: [f64; 6],
    sgt: [f64; 6],
    sgm: [f64; 6],
    hess: [f64; 21],
}

impl Level {
    fn new(template: &Image, moving: &Image) -> Result<Self> {
        let kernel = KernelSpec::gaussian_sized(SMOOTH_SIZE);
        let t = filter(template, kernel)?;
        let m = filter(moving, kernel)?;
        let (gx, gy) = gradient(&m)?;
        Ok(Self {
            width: t.width(),
            height: t.height(),
            template: t.into_vec(),
            moving: m.into_vec(),
            gx: gx.into_vec(),
            gy: gy.into_vec(),
        })
    }

    fn moments(&self, warp: &AffineWarp) -> Moments {
        let (w, h) = (self.width, self.height);
        let (xmax, ymax) = ((w - 1) as f64, (h - 1) as f64);
        let p = &warp.m;
        let mut mo = Moments::default();
        for y in 0..h {
            let yf = y as f64;
            let trow = &self.template[y * w..(y + 1) * w];
            for (x, &t) in trow.iter().enumerate() {
                let xf = x as f64;
                let sx = p[0] * xf + p[1] * yf + p[2];
                let sy = p[3] * xf + p[4] * yf + p[5];
                if !(sx >= 0.0 && sy >= 0.0 && sx <= xmax && sy <= ymax) {
                    continue;
                }
                let x0 = (sx as usize).min(w - 1);
                let y0 = (sy as usize).min(h - 1);
                let x1 = (x0 + 1).min(w - 1);
                let y1 = (y0 + 1).min(h - 1);
                let fx = sx - x0 as f64;
                let fy = sy - y0 as f64;
                let (i00, i01, i10, i11) = (y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1);
                let lerp = |v: &[f64]| {
                    let top = v[i00] + fx * (v[i01] - v[i00]);
                    let bot = v[i10] + fx * (v[i11] - v[i10]);
                    top + fy * (bot - top)
                };
                let m = lerp(&self.moving);
                let gx = lerp(&self.gx);
                let gy = lerp(&self.gy);
                let g = [gx * xf, gx * yf, gx, gy * xf, gy * yf, gy];

                mo.n += 1.0;
                mo.st += t;
                mo.sm += m;
                mo.stt += t * t;
                mo.smm += m * m;
                mo.stm += t * m;
                let mut k = 0;
                for i in 0..6 {
                    mo.sg[i] += g[i];
                    mo.sgt[i] += g[i] * t;
                    mo.sgm[i] += g[i] * m;
                    for j in i..6 {
                        mo.hess[k] += g[i] * g[j];
                        k += 1;
                    }
                }
            }
        }
        mo
    }

    /// Iterates until the correlation settles. Returns the final correlation
    /// and the number of iterations.
    fn solve(
        &self,
        warp: &mut AffineWarp,
        max_iter: usize,
        eps: f64,
    ) -> Result<(f64, usize), NotConvergedReason> {
        let min_overlap = (6.0f64).max(0.05 * (self.width * self.height) as f64);
        let mut last_rho = f64::NAN;
        for iter in 1..=max_iter {
            let mo = self.moments(warp);
            if mo.n < min_overlap {
                return Err(NotConvergedReason::NoOverlap);
            }
            let mean_t = mo.st / mo.n;
            let mean_m = mo.sm / mo.n;
            let t_norm2 = mo.stt - mo.n * mean_t * mean_t;
            let m_norm2 = mo.smm - mo.n * mean_m * mean_m;
            if t_norm2 <= TEXTURE_FLOOR * mo.n || m_norm2 <= TEXTURE_FLOOR * mo.n {
                return Err(NotConvergedReason::Textureless);
            }
            let corr = mo.stm - mo.n * mean_t * mean_m;
            let rho = corr / (t_norm2.sqrt() * m_norm2.sqrt());
            if !rho.is_finite() {
                return Err(NotConvergedReason::SingularSystem);
            }
            if (rho - last_rho).abs() < eps {
                return Ok((rho, iter));
            }
            last_rho = rho;

            let mut hess = Matrix6::zeros();
            let mut k = 0;
            for i in 0..6 {
                for j in i..6 {
                    hess[(i, j)] = mo.hess[k];
                    hess[(j, i)] = mo.hess[k];
                    k += 1;
                }
            }
            let tp = Vector6::from_fn(|i, _| mo.sgt[i] - mean_t * mo.sg[i]);
            let ip = Vector6::from_fn(|i, _| mo.sgm[i] - mean_m * mo.sg[i]);
            let chol = match hess.cholesky() {
                Some(c) => c,
                None => return Err(NotConvergedReason::SingularSystem),
            };
            let hinv_ip = chol.solve(&ip);
            let lambda_n = m_norm2 - ip.dot(&hinv_ip);
            let lambda_d = corr - tp.dot(&hinv_ip);
            if !(lambda_d > 0.0) {
                return Err(NotConvergedReason::NegativeCorrelation);
            }
            let lambda = lambda_n / lambda_d;
            let err_proj = tp * lambda - ip;
            let delta = chol.solve(&err_proj);
            if delta.iter().any(|v| !v.is_finite()) {
                return Err(NotConvergedReason::SingularSystem);
            }
            for (p, d) in warp.m.iter_mut().zip(delta.iter()) {
                *p += d;
            }
            if iter == max_iter {
                let mo = self.moments(warp);
                let rho = final_rho(&mo).unwrap_or(last_rho);
                return Ok((rho, iter));
            }
        }
        unreachable!("loop returns on its last iteration")
    }
}

fn final_rho(mo: &Moments) -> Option<f64> {
    if mo.n == 0.0 {
        return None;
    }
    let mean_t = mo.st / mo.n;
    let mean_m = mo.sm / mo.n;
    let t_norm2 = mo.stt - mo.n * mean_t * mean_t;
    let m_norm2 = mo.smm - mo.n * mean_m * mean_m;
    let rho = (mo.stm - mo.n * mean_t * mean_m) / (t_norm2.sqrt() * m_norm2.sqrt());
    rho.is_finite().then_some(rho)
}
