use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Boolean image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "mask data has {} entries for {width}x{height}",
                data.len()
            )));
        }
        Ok(Mask {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Mask {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }

    /// Pixels whose value exceeds `threshold`.
    pub fn from_threshold<T: Real>(values: &[T], width: usize, height: usize, threshold: T) -> Self {
        Mask {
            width,
            height,
            data: values.iter().map(|a| *a > threshold).collect(),
        }
    }

    /// Inclusive bounding box `(x0, y0, x1, y1)` of the true pixels.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    bb = Some(match bb {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        bb
    }
}

/// RGB image with channel values in `[0, 1]`, interleaved row-major, plus
/// an optional foreground mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T: Real> {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<T>,
    pub mask: Option<Mask>,
}

impl<T: Real> Frame<T> {
    pub fn new(width: usize, height: usize, pixels: Vec<T>) -> Result<Self> {
        if pixels.len() != 3 * width * height {
            return Err(Error::DimensionMismatch(format!(
                "frame buffer has {} values for {width}x{height}x3",
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !(**v >= T::zero() && **v <= T::one())) {
            return Err(Error::InvalidFrame(format!("channel value {bad} outside [0, 1]")));
        }
        Ok(Frame {
            width,
            height,
            pixels,
            mask: None,
        })
    }

    pub fn filled(width: usize, height: usize, color: Vector3<T>) -> Self {
        let mut pixels = Vec::with_capacity(3 * width * height);
        for _ in 0..width * height {
            pixels.extend_from_slice(color.as_slice());
        }
        Frame {
            width,
            height,
            pixels,
            mask: None,
        }
    }

    pub fn with_mask(mut self, mask: Mask) -> Result<Self> {
        if mask.width != self.width || mask.height != self.height {
            return Err(Error::DimensionMismatch(format!(
                "mask {}x{} vs frame {}x{}",
                mask.width, mask.height, self.width, self.height
            )));
        }
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn pixel(&self, x: usize, y: usize) -> Vector3<T> {
        let i = 3 * (y * self.width + x);
        Vector3::new(self.pixels[i], self.pixels[i + 1], self.pixels[i + 2])
    }

    pub fn same_size(&self, other: &Frame<T>) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> Frame<U> {
        Frame {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|v| U::lit(v.as_f64())).collect(),
            mask: self.mask.clone(),
        }
    }
}
