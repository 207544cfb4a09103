//! Image and depth-map containers shared by every stage of the pipeline.
//!
//! Two image types are deliberate: [`ImageRgb`] carries the [0,1] invariant
//! across module boundaries, while [`ImageField`] is the unconstrained
//! working buffer used inside loss computations (residuals are signed,
//! reconstructions may overshoot before the final clamp).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An H x W RGB image with every component finite and inside [0,1].
/// Samples are stored row-major, interleaved R,G,B.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRgb {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageRgb {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument {
                what: "image dimensions",
                why: format!("{width}x{height}"),
            });
        }
        if data.len() != width * height * 3 {
            return Err(Error::InvalidArgument {
                what: "image buffer length",
                why: format!("expected {}, got {}", width * height * 3, data.len()),
            });
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::InvalidArgument {
                what: "image component",
                why: format!("{bad} outside [0,1]"),
            });
        }
        Ok(Self { width, height, data })
    }

    /// Build from a per-pixel closure returning (r, g, b). Values are
    /// validated like [`ImageRgb::new`].
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Result<Self> {
        Self::from_fn(width, height, |_, _| rgb)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Pixel count (not counting channels).
    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * 3 + c]
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// All samples of one channel in row-major order.
    pub fn channel(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().skip(c).step_by(3).copied()
    }

    pub fn same_dims(&self, other: &ImageRgb) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Lift into the unconstrained working representation.
    pub fn to_field(&self) -> ImageField {
        ImageField {
            width: self.width,
            height: self.height,
            data: self.data.clone(),
        }
    }
}

/// An H x W x 3 buffer of unconstrained finite values. Used for signed
/// residuals, amplification maps and pre-clamp reconstructions.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageField {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height * 3, "field buffer length");
        Self { width, height, data }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * 3 + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * 3 + c] = v;
    }

    /// One channel as a contiguous plane (row-major).
    pub fn plane(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(3).copied().collect()
    }

    pub fn same_dims(&self, other: &ImageField) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Clamp every component to [0,1] and return the boundary type.
    /// Also reports how many components were clamped.
    pub fn clamp_to_rgb(&self) -> (ImageRgb, usize) {
        let mut clamped = 0usize;
        let data = self
            .data
            .iter()
            .map(|&v| {
                if v < 0.0 {
                    clamped += 1;
                    0.0
                } else if v > 1.0 {
                    clamped += 1;
                    1.0
                } else {
                    v
                }
            })
            .collect();
        let img = ImageRgb {
            width: self.width,
            height: self.height,
            data,
        };
        (img, clamped)
    }
}

/// Per-pixel camera-to-scene range, pixel-aligned with its paired image.
/// Values are unitless after min-max normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    z: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, z: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument {
                what: "depth dimensions",
                why: format!("{width}x{height}"),
            });
        }
        if z.len() != width * height {
            return Err(Error::InvalidArgument {
                what: "depth buffer length",
                why: format!("expected {}, got {}", width * height, z.len()),
            });
        }
        if let Some(bad) = z.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidArgument {
                what: "depth value",
                why: format!("{bad} is negative or non-finite"),
            });
        }
        Ok(Self { width, height, z })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut z = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                z.push(f(x, y));
            }
        }
        Self::new(width, height, z)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.z
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.z[y * self.width + x]
    }

    pub fn matches_image(&self, img: &ImageRgb) -> Result<()> {
        if self.width != img.width() || self.height != img.height() {
            return Err(Error::DimensionMismatch {
                what: "depth map vs image",
                expected_w: img.width(),
                expected_h: img.height(),
                found_w: self.width,
                found_h: self.height,
            });
        }
        Ok(())
    }
}

/// One axis-aligned rectangle in pixel coordinates. `x0/y0` inclusive,
/// `x1/y1` exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PatchRect {
    pub fn is_empty(&self) -> bool {
        self.x1 <= self.x0 || self.y1 <= self.y0
    }
}

/// The six grayscale calibration patches used by the angular-error metric.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchAnnotation {
    pub patches: Vec<PatchRect>,
}

impl PatchAnnotation {
    pub fn new(patches: Vec<PatchRect>) -> Result<Self> {
        if patches.len() != 6 {
            return Err(Error::PatchCount {
                found: patches.len(),
            });
        }
        Ok(Self { patches })
    }

    /// Check all six rectangles are non-empty and inside the image.
    pub fn validate_against(&self, img: &ImageRgb) -> Result<()> {
        if self.patches.len() != 6 {
            return Err(Error::PatchCount {
                found: self.patches.len(),
            });
        }
        for (index, p) in self.patches.iter().enumerate() {
            if p.is_empty() || p.x1 > img.width() || p.y1 > img.height() {
                return Err(Error::PatchOutOfBounds { index });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_components() {
        assert!(ImageRgb::new(1, 1, vec![0.0, 0.5, 1.2]).is_err());
        assert!(ImageRgb::new(1, 1, vec![0.0, f64::NAN, 0.5]).is_err());
        assert!(ImageRgb::new(1, 1, vec![0.0, 0.5, 1.0]).is_ok());
    }

    #[test]
    fn rejects_zero_sized_images() {
        assert!(ImageRgb::new(0, 4, vec![]).is_err());
        assert!(DepthMap::new(3, 0, vec![]).is_err());
    }

    #[test]
    fn rejects_length_mismatch() {
        assert!(ImageRgb::new(2, 2, vec![0.0; 11]).is_err());
        assert!(DepthMap::new(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn clamp_counts_events() {
        let f = ImageField::from_vec(1, 1, vec![-0.5, 0.25, 1.5]);
        let (img, clamped) = f.clamp_to_rgb();
        assert_eq!(clamped, 2);
        assert_eq!(img.pixel(0, 0), [0.0, 0.25, 1.0]);
    }

    #[test]
    fn depth_dimension_check() {
        let img = ImageRgb::filled(4, 3, [0.5, 0.5, 0.5]).unwrap();
        let d_ok = DepthMap::new(4, 3, vec![0.1; 12]).unwrap();
        let d_bad = DepthMap::new(3, 4, vec![0.1; 12]).unwrap();
        assert!(d_ok.matches_image(&img).is_ok());
        assert!(d_bad.matches_image(&img).is_err());
    }

    #[test]
    fn patch_annotation_requires_six() {
        let r = PatchRect { x0: 0, y0: 0, x1: 1, y1: 1 };
        assert!(PatchAnnotation::new(vec![r; 5]).is_err());
        assert!(PatchAnnotation::new(vec![r; 6]).is_ok());
    }

    #[test]
    fn patch_bounds_checked() {
        let img = ImageRgb::filled(8, 8, [0.2, 0.2, 0.2]).unwrap();
        let mut patches = vec![PatchRect { x0: 0, y0: 0, x1: 2, y1: 2 }; 6];
        patches[3] = PatchRect { x0: 6, y0: 6, x1: 9, y1: 8 };
        let ann = PatchAnnotation::new(patches).unwrap();
        assert!(ann.validate_against(&img).is_err());
    }

    #[test]
    fn channel_iterator_walks_one_channel() {
        let img = ImageRgb::new(2, 1, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let greens: Vec<f64> = img.channel(1).collect();
        assert_eq!(greens, vec![0.2, 0.5]);
    }
}
