//! Flat real-valued image vectors.
//!
//! Pixels are stored row-major with interleaved channels, the same order as a
//! binary PNM raster, so an 8-bit file maps onto the vector without reshuffling.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Self { height, width, channels }
    }

    pub const fn gray(height: usize, width: usize) -> Self {
        Self::new(height, width, 1)
    }

    /// Number of scalar values, `H·W·C`.
    pub const fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub const fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// A toy image as a flat vector. Inside the pipeline values are unconstrained
/// reals (solver states leave `[0, 1]`); only file output and the degradation
/// channels quantize and clamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageVector {
    shape: Shape,
    data: Vec<f64>,
}

impl ImageVector {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values ({shape})", shape.len()),
                found: format!("{} values", data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        Self { shape, data: vec![value; shape.len()] }
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, 0.0)
    }

    /// Builds an image from 8-bit samples, mapping `v` to `v / 255`.
    pub fn from_u8(shape: Shape, bytes: &[u8]) -> Result<Self> {
        Self::new(shape, bytes.iter().map(|&b| f64::from(b) / 255.0).collect())
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    /// Same shape, new values.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        Self::new(self.shape, data)
    }

    pub fn ensure_same_shape(&self, other: &ImageVector) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch { expected: self.shape.to_string(), found: other.shape.to_string() });
        }
        Ok(())
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn clamped(&self) -> Self {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    /// 8-bit samples, `round(clamp(v)·255)`.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize_u8(v)).collect()
    }

    /// Round trip through 8-bit storage.
    pub fn quantized(&self) -> Self {
        self.map(|v| f64::from(quantize_u8(v)) / 255.0)
    }

    /// Root-mean-square distance to `other`.
    pub fn rms_distance(&self, other: &ImageVector) -> Result<f64> {
        self.ensure_same_shape(other)?;
        if self.is_empty() {
            return Err(Error::Empty("image"));
        }
        Ok((squared_distance(&self.data, &other.data) / self.len() as f64).sqrt())
    }
}

#[inline]
pub fn quantize_u8(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
