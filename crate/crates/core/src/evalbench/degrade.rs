use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{filter, Image, KernelSpec};

pub const DEGRADE_KERNEL: usize = 15;
pub const VISUAL_GAIN: f64 = 0.6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradeKind {
    Visual,
    Thermal,
}

impl FromStr for DegradeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "visual" => Ok(Self::Visual),
            "thermal" => Ok(Self::Thermal),
            other => Err(Error::InvalidConfig(format!(
                "unknown degradation kind `{other}`"
            ))),
        }
    }
}

/// 15x15 Gaussian blur; the visual kind is then scaled by 0.6.
pub fn degrade(img: &Image, kind: DegradeKind) -> Result<Image> {
    let blurred = filter(img, KernelSpec::gaussian_sized(DEGRADE_KERNEL))?;
    Ok(match kind {
        DegradeKind::Thermal => blurred,
        DegradeKind::Visual => blurred.map(|v| v * VISUAL_GAIN),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::{gaussian_weights, sigma_for_size};

    #[test]
    fn constants() {
        let c = Image::filled(20, 20, 3, 200.0).unwrap();
        let t = degrade(&c, DegradeKind::Thermal).unwrap();
        assert!(t.max_abs_diff(&c).unwrap() < 1e-9);
        let v = degrade(&c, DegradeKind::Visual).unwrap();
        assert!(v.data().iter().all(|&x| (x - 120.0).abs() < 1e-9));
    }

    #[test]
    fn impulse_gives_kernel() {
        let n = 31;
        let img = Image::from_fn(n, n, |x, y| if x == 15 && y == 15 { 1.0 } else { 0.0 }).unwrap();
        let out = degrade(&img, DegradeKind::Thermal).unwrap();
        let sigma = sigma_for_size(15);
        // 1D oracle weights built directly from the Gaussian formula.
        let raw: Vec<f64> = (-7..=7)
            .map(|i: i32| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        let s: f64 = raw.iter().sum();
        let k: Vec<f64> = raw.iter().map(|v| v / s).collect();
        assert!((sigma - 2.6).abs() < 1e-12);
        for (a, b) in k.iter().zip(gaussian_weights(15, sigma)) {
            assert!((a - b).abs() < 1e-15);
        }
        for y in 0..15 {
            for x in 0..15 {
                let want = k[x] * k[y];
                assert!((out.get(x + 8, y + 8) - want).abs() < 1e-12);
            }
        }
        assert_eq!(out.get(0, 0), 0.0);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!(
            "visual".parse::<DegradeKind>().unwrap(),
            DegradeKind::Visual
        );
        assert!("both".parse::<DegradeKind>().is_err());
    }
}
