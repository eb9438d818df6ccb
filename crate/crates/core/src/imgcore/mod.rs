//! Planar floating-point rasters and the primitives every pipeline builds on.
//!
//! Intensities stay in `f64` from load to save; quantisation to 8 bits only
//! happens in [`io`]. Every border lookup replicates the edge pixel.

mod color;
mod filter;
pub mod io;
mod resample;

pub use color::{min_max_normalize, to_grayscale, ycrcb, ycrcb_inverse, LUMA_WEIGHTS};
pub(crate) use filter::window_radius;
pub use filter::{box_mean_plane, filter, gaussian, gaussian_weights, gradient, sigma_for_size};
pub use resample::{resample_bilinear, sample_bilinear};

use crate::error::{Error, Result};

/// A planar raster: `channels` consecutive row-major planes of `width * height`
/// samples each. Nominal intensity range is `[0, 255]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    /// Zero-filled image.
    pub fn new(width: usize, height: usize, channels: usize) -> Result<Self> {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        check_shape(width, height, channels)?;
        if !value.is_finite() {
            return Err(Error::NonFinite(0));
        }
        Ok(Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        })
    }

    /// Wraps planar data. Rejects wrong lengths and non-finite samples.
    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        check_shape(width, height, channels)?;
        if data.len() != width * height * channels {
            return Err(Error::InvalidDimension(format!(
                "data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Single-channel image from a per-pixel function `f(x, y)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        check_shape(width, height, 1)?;
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::from_vec(width, height, 1, data)
    }

    /// Stacks equally sized single planes into one image.
    pub fn from_planes(width: usize, height: usize, planes: &[&[f64]]) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * planes.len());
        for p in planes {
            if p.len() != width * height {
                return Err(Error::InvalidDimension("plane length mismatch".into()));
            }
            data.extend_from_slice(p);
        }
        Self::from_vec(width, height, planes.len(), data)
    }

    /// Internal constructor for buffers produced by finite arithmetic.
    pub(crate) fn from_raw(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(width, height)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.pixel_count();
        &self.data[c * n..(c + 1) * n]
    }

    pub(crate) fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.pixel_count();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Sample of channel 0.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_c(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[c * self.pixel_count() + y * self.width + x]
    }

    /// Extracts one channel as a single-channel image.
    pub fn channel(&self, c: usize) -> Image {
        Image::from_raw(self.width, self.height, 1, self.plane(c).to_vec())
    }

    pub fn same_grid(&self, other: &Image) -> bool {
        self.dims() == other.dims()
    }

    pub fn expect_channels(&self, expected: usize) -> Result<()> {
        if self.channels != expected {
            return Err(Error::InvalidChannelCount {
                expected,
                found: self.channels,
            });
        }
        Ok(())
    }

    pub fn expect_same_grid(&self, other: &Image) -> Result<()> {
        if !self.same_grid(other) {
            return Err(Error::DimensionMismatch {
                left: self.dims(),
                right: other.dims(),
            });
        }
        Ok(())
    }

    /// Applies `f` to every sample. Non-finite results are replaced by 0.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        let data = self.data.iter().map(|&v| finite_or_zero(f(v))).collect();
        Image::from_raw(self.width, self.height, self.channels, data)
    }

    /// Pointwise combination of two images of identical shape.
    pub fn zip_map(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Result<Image> {
        self.expect_same_grid(other)?;
        if self.channels != other.channels {
            return Err(Error::InvalidChannelCount {
                expected: self.channels,
                found: other.channels,
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| finite_or_zero(f(a, b)))
            .collect();
        Ok(Image::from_raw(
            self.width,
            self.height,
            self.channels,
            data,
        ))
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Image {
        self.map(|v| v.clamp(lo, hi))
    }

    /// Minimum and maximum over all samples.
    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Copies a single-channel image into three identical channels.
    pub fn replicate3(&self) -> Result<Image> {
        self.expect_channels(1)?;
        let mut data = Vec::with_capacity(self.data.len() * 3);
        for _ in 0..3 {
            data.extend_from_slice(&self.data);
        }
        Ok(Image::from_raw(self.width, self.height, 3, data))
    }

    /// Largest absolute difference to another image of identical shape.
    pub fn max_abs_diff(&self, other: &Image) -> Result<f64> {
        self.expect_same_grid(other)?;
        if self.channels != other.channels {
            return Err(Error::InvalidChannelCount {
                expected: self.channels,
                found: other.channels,
            });
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

#[inline]
fn finite_or_zero(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

fn check_shape(width: usize, height: usize, channels: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimension(format!(
            "{width}x{height} has no pixels"
        )));
    }
    if channels != 1 && channels != 3 {
        return Err(Error::InvalidChannelCount {
            expected: 3,
            found: channels,
        });
    }
    Ok(())
}

/// Linear filter kernels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelSpec {
    /// Mean over a `(2r+1) x (2r+1)` window.
    Box { radius: usize },
    /// Separable normalised Gaussian of odd `size`.
    Gaussian { size: usize, sigma: f64 },
}

impl KernelSpec {
    /// Gaussian whose support covers three standard deviations on each side.
    pub fn gaussian(sigma: f64) -> Self {
        let half = (3.0 * sigma).ceil().max(1.0) as usize;
        KernelSpec::Gaussian {
            size: 2 * half + 1,
            sigma,
        }
    }

    /// Gaussian of the given odd size with the sigma OpenCV derives when none
    /// is supplied.
    pub fn gaussian_sized(size: usize) -> Self {
        KernelSpec::Gaussian {
            size,
            sigma: sigma_for_size(size),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Box { .. } => Ok(()),
            KernelSpec::Gaussian { size, sigma } => {
                if size % 2 == 0 {
                    return Err(Error::InvalidKernel(format!("size {size} is even")));
                }
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return Err(Error::InvalidKernel(format!(
                        "sigma {sigma} must be positive"
                    )));
                }
                Ok(())
            }
        }
    }
}
