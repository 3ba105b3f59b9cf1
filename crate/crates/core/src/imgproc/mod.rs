//! 8-bit raster primitives used by the anomaly generator: buffers, colour
//! jitter, flips and rotation, noise, Otsu thresholding, binary morphology
//! and mask algebra.

mod color;
mod compose;
mod geometry;
mod morphology;
mod noise;
mod threshold;

pub use color::{color_jitter, color_jitter_with, random_color, JitterMode, JitterStrengths};
pub use compose::{apply_mask, mask_and, paste};
pub use geometry::{flip, random_flip, rotate, FlipDraw};
pub use morphology::dilate;
pub use noise::gaussian_noise;
pub use threshold::{luma, otsu_threshold, OtsuResult};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned pixel rectangle, `(x, y)` being the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

/// RGB raster, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize) -> Self {
        ImageBuffer { width, height, data: vec![0; width * height * 3] }
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        ImageBuffer { width, height, data }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} RGB image needs {} bytes, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(ImageBuffer { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        ImageBuffer { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn crop(&self, rect: Rect) -> Result<ImageBuffer> {
        if rect.x + rect.width > self.width || rect.y + rect.height > self.height {
            return Err(Error::OutOfBounds(format!(
                "crop {rect:?} outside {}x{} image",
                self.width, self.height
            )));
        }
        Ok(ImageBuffer::from_fn(rect.width, rect.height, |x, y| self.get(rect.x + x, rect.y + y)))
    }

    /// Per-pixel map over RGB triples.
    pub fn map_pixels(&self, mut f: impl FnMut([u8; 3]) -> [u8; 3]) -> ImageBuffer {
        let mut out = self.clone();
        for px in out.data.chunks_exact_mut(3) {
            let v = f([px[0], px[1], px[2]]);
            px.copy_from_slice(&v);
        }
        out
    }
}

/// Binary raster with samples in `{0, 1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskBuffer {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl MaskBuffer {
    pub fn zeros(width: usize, height: usize) -> Self {
        MaskBuffer { width, height, data: vec![0; width * height] }
    }

    pub fn ones(width: usize, height: usize) -> Self {
        MaskBuffer { width, height, data: vec![1; width * height] }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} mask needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::InvalidArgument("mask samples must be 0 or 1".into()));
        }
        Ok(MaskBuffer { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y) as u8);
            }
        }
        MaskBuffer { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.data[y * self.width + x] = on as u8;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&v| v != 0)
    }

    pub fn occupancy(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.count() as f64 / self.data.len() as f64
    }

    pub fn not(&self) -> MaskBuffer {
        MaskBuffer { width: self.width, height: self.height, data: self.data.iter().map(|&v| 1 - v).collect() }
    }

    /// True when every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &MaskBuffer) -> bool {
        self.dims() == other.dims() && self.data.iter().zip(&other.data).all(|(&a, &b)| a <= b)
    }

    /// Copies `self` onto a zero canvas of the given size with its top-left
    /// corner at `(x, y)`.
    pub fn placed_on_canvas(&self, width: usize, height: usize, (x, y): (usize, usize)) -> Result<MaskBuffer> {
        if x + self.width > width || y + self.height > height {
            return Err(Error::OutOfBounds(format!(
                "{}x{} mask at ({x},{y}) does not fit a {width}x{height} canvas",
                self.width, self.height
            )));
        }
        let mut canvas = MaskBuffer::zeros(width, height);
        for row in 0..self.height {
            let src = &self.data[row * self.width..(row + 1) * self.width];
            let start = (y + row) * width + x;
            canvas.data[start..start + self.width].copy_from_slice(src);
        }
        Ok(canvas)
    }
}

pub(crate) fn ensure_dims(image: (usize, usize), mask: (usize, usize)) -> Result<()> {
    if image != mask {
        return Err(Error::DimensionMismatch(format!(
            "image is {}x{} but mask is {}x{}",
            image.0, image.1, mask.0, mask.1
        )));
    }
    Ok(())
}

#[inline]
pub(crate) fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_raw_length_checked() {
        assert!(ImageBuffer::from_raw(2, 2, vec![0; 12]).is_ok());
        assert!(ImageBuffer::from_raw(2, 2, vec![0; 11]).is_err());
    }

    #[test]
    fn mask_rejects_non_binary() {
        assert!(MaskBuffer::from_raw(1, 2, vec![0, 1]).is_ok());
        assert!(MaskBuffer::from_raw(1, 2, vec![0, 2]).is_err());
    }

    #[test]
    fn crop_bounds() {
        let img = ImageBuffer::from_fn(4, 3, |x, y| [x as u8, y as u8, 0]);
        let c = img.crop(Rect { x: 1, y: 1, width: 3, height: 2 }).unwrap();
        assert_eq!(c.get(0, 0), [1, 1, 0]);
        assert_eq!(c.get(2, 1), [3, 2, 0]);
        assert!(img.crop(Rect { x: 2, y: 0, width: 3, height: 1 }).is_err());
    }

    #[test]
    fn placed_on_canvas_offsets() {
        let m = MaskBuffer::ones(2, 2);
        let c = m.placed_on_canvas(5, 4, (3, 1)).unwrap();
        assert_eq!(c.count(), 4);
        assert!(c.get(3, 1) && c.get(4, 2));
        assert!(m.placed_on_canvas(5, 4, (4, 1)).is_err());
    }
}
