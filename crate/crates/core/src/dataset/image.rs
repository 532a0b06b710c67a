use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

/// Channel count and spatial size of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ImageShape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Channel-major `c × H × L` image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    shape: ImageShape,
    data: Vec<f64>,
}

impl Image {
    pub fn zeros(shape: ImageShape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn from_vec(shape: ImageShape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::ShapeMismatch {
                context: "image",
                expected: (shape.len(), 1),
                got: (data.len(), 1),
            });
        }
        if !math::all_finite(&data) {
            return Err(Error::NonFinite { layer: 0 });
        }
        Ok(Self { shape, data })
    }

    /// Like [`from_vec`](Self::from_vec) but clips every value into `[0, 1]`.
    pub fn from_vec_clipped(shape: ImageShape, mut data: Vec<f64>) -> Result<Self> {
        data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Self::from_vec(shape, data)
    }

    pub fn shape(&self) -> ImageShape {
        self.shape
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, row: usize, col: usize) -> f64 {
        self.data[(c * self.shape.height + row) * self.shape.width + col]
    }

    #[inline]
    pub fn get_mut(&mut self, c: usize, row: usize, col: usize) -> &mut f64 {
        &mut self.data[(c * self.shape.height + row) * self.shape.width + col]
    }

    pub fn norm_sq(&self) -> f64 {
        math::dot(&self.data, &self.data)
    }

    /// Squared Frobenius distance.
    pub fn se(&self, other: &Image) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                context: "image se",
                expected: (self.shape.len(), 1),
                got: (other.shape.len(), 1),
            });
        }
        Ok(math::dist2(&self.data, &other.data))
    }

    /// Pointwise `(1 − t)·self + t·other`.
    pub fn lerp(&self, other: &Image, t: f64) -> Result<Image> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                context: "image lerp",
                expected: (self.shape.len(), 1),
                got: (other.shape.len(), 1),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (1.0 - t) * a + t * b)
            .collect();
        Ok(Image {
            shape: self.shape,
            data,
        })
    }
}
