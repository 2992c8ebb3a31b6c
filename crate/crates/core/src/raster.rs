//! RGB float rasters: decoding, encoding, bilinear sampling and blending.
//!
//! Samples are stored as `f32` in `[0, 1]`, row-major, three channels per
//! pixel. Quantization to 8 bits happens exactly once, when a raster is
//! written to disk.

use std::path::Path;

use image::{ImageFormat, ImageReader, RgbImage};
use thiserror::Error;

pub const CHANNELS: usize = 3;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("raster dimensions must be positive, got {width}x{height}")]
    ZeroDimension { width: u32, height: u32 },
    #[error("sample buffer has {actual} values, expected {expected}")]
    BufferLength { expected: usize, actual: usize },
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("raster size mismatch: {0}x{1} vs {2}x{3}")]
    SizeMismatch(u32, u32, u32, u32),
    #[error("blend weight {0} outside [0, 1]")]
    AlphaRange(f64),
    #[error("cannot read image {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("cannot open image {path}: {source}")]
    Open {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported image format for {0} (expected PNG or JPEG)")]
    UnsupportedFormat(String),
    #[error("cannot write image {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: image::ImageError,
    },
}

/// An RGB image with float samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl Raster {
    /// Builds a raster from row-major RGB samples. Finite values are clamped
    /// into `[0, 1]`; NaN or infinite samples are rejected.
    pub fn new(width: u32, height: u32, mut data: Vec<f32>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::ZeroDimension { width, height });
        }
        let expected = width as usize * height as usize * CHANNELS;
        if data.len() != expected {
            return Err(RasterError::BufferLength {
                expected,
                actual: data.len(),
            });
        }
        for (i, v) in data.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(RasterError::NonFinite(i));
            }
            *v = v.clamp(0.0, 1.0);
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [f32; 3]) -> Result<Self, RasterError> {
        let n = width as usize * height as usize;
        let data = rgb.iter().copied().cycle().take(n * CHANNELS).collect();
        Self::new(width, height, data)
    }

    /// Builds a raster by evaluating `f(x, y)` at every pixel.
    pub fn from_fn<F>(width: u32, height: u32, mut f: F) -> Result<Self, RasterError>
    where
        F: FnMut(u32, u32) -> [f32; 3],
    {
        let mut data = Vec::with_capacity(width as usize * height as usize * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn same_size(&self, other: &Raster) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn pixel(&self, x: u32, y: u32) -> [f32; 3] {
        let i = self.offset(x, y);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * CHANNELS
    }

    /// Bilinear interpolation at a continuous pixel coordinate, where integer
    /// coordinates are pixel centers. Coordinates outside the image are
    /// clamped to `[0, width-1] x [0, height-1]`.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> [f32; 3] {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        // NaN collapses onto the origin rather than poisoning the output.
        let x = if x.is_nan() { 0.0 } else { x.clamp(0.0, max_x) };
        let y = if y.is_nan() { 0.0 } else { y.clamp(0.0, max_y) };

        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let x0 = x0 as u32;
        let y0 = y0 as u32;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);

        let p00 = self.pixel(x0, y0);
        let p10 = self.pixel(x1, y0);
        let p01 = self.pixel(x0, y1);
        let p11 = self.pixel(x1, y1);

        let mut out = [0.0f32; 3];
        for c in 0..CHANNELS {
            let top = lerp(p00[c] as f64, p10[c] as f64, fx);
            let bottom = lerp(p01[c] as f64, p11[c] as f64, fx);
            let v = lerp(top, bottom, fy) as f32;
            let lo = p00[c].min(p10[c]).min(p01[c]).min(p11[c]);
            let hi = p00[c].max(p10[c]).max(p01[c]).max(p11[c]);
            out[c] = v.clamp(lo, hi);
        }
        out
    }

    /// Quantizes every sample to 8 bits, rounding half away from zero.
    pub fn to_rgb8(&self) -> RgbImage {
        let bytes = self.data.iter().map(|&v| quantize(v)).collect();
        RgbImage::from_raw(self.width, self.height, bytes).expect("buffer length checked on construction")
    }

    pub fn from_rgb8(img: &RgbImage) -> Result<Self, RasterError> {
        let data = img.as_raw().iter().map(|&b| b as f32 / 255.0).collect();
        Self::new(img.width(), img.height(), data)
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// `round(v * 255)` with ties away from zero.
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// The pair of weights `(w_a, w_b)` used for an `alpha`-blend.
///
/// The weight that is at least one half is computed as the exact complement
/// of the other, so `blend_weights(1 - alpha)` returns the same two numbers
/// swapped. This makes every blend in the crate bit-symmetric under
/// swapping its operands together with `alpha -> 1 - alpha`.
pub fn blend_weights(alpha: f64) -> (f64, f64) {
    if alpha >= 0.5 {
        (alpha, 1.0 - alpha)
    } else {
        let wb = 1.0 - alpha;
        (1.0 - wb, wb)
    }
}

pub fn check_alpha(alpha: f64) -> Result<(), RasterError> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(RasterError::AlphaRange(alpha))
    }
}

/// Per-sample `alpha * a + (1 - alpha) * b`.
pub fn blend(a: &Raster, b: &Raster, alpha: f64) -> Result<Raster, RasterError> {
    check_alpha(alpha)?;
    if !a.same_size(b) {
        return Err(RasterError::SizeMismatch(a.width, a.height, b.width, b.height));
    }
    let (wa, wb) = blend_weights(alpha);
    let data = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| blend_sample(x, y, wa, wb))
        .collect();
    Raster::new(a.width, a.height, data)
}

#[inline]
pub(crate) fn blend_sample(a: f32, b: f32, wa: f64, wb: f64) -> f32 {
    (wa * a as f64 + wb * b as f64) as f32
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Raster, RasterError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let reader = ImageReader::open(path)
        .map_err(|source| RasterError::Open {
            path: shown.clone(),
            source,
        })?
        .with_guessed_format()
        .map_err(|source| RasterError::Open {
            path: shown.clone(),
            source,
        })?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Jpeg) => {}
        _ => return Err(RasterError::UnsupportedFormat(shown)),
    }
    let img = reader.decode().map_err(|source| RasterError::Read {
        path: shown,
        source,
    })?;
    Raster::from_rgb8(&img.to_rgb8())
}

/// Encodes the raster as an 8-bit PNG, whatever the path's extension.
pub fn save_image(raster: &Raster, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let path = path.as_ref();
    raster
        .to_rgb8()
        .save_with_format(path, ImageFormat::Png)
        .map_err(|source| RasterError::Write {
            path: path.display().to_string(),
            source,
        })
}
