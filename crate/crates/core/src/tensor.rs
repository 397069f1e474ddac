//! Dense real-valued tensors and binary keep-masks.
//!
//! Everything is stored channel-major (`[c][y][x]`) as `f64`. Image data lives in
//! `[-1, 1]`; quantization to 8 bits only happens in [`crate::canvas`] at the I/O
//! boundary. Low-dimensional test data (e.g. a point in R²) is a `1×1×d` tensor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape { channels, height, width }
    }

    /// A flat vector of `len` values.
    pub const fn vector(len: usize) -> Self {
        Shape { channels: 1, height: 1, width: len }
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn pixels(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub const fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        Tensor { shape, data: vec![value; shape.len()] }
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::invalid(format!(
                "tensor of shape {shape} needs {} values, got {}",
                shape.len(),
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor { shape: Shape::vector(data.len()), data }
    }

    pub fn scalar(value: f64) -> Self {
        Self::vector(vec![value])
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

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.shape.index(c, y, x)]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, value: f64) {
        let i = self.shape.index(c, y, x);
        self.data[i] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// `a·self + b·other`, elementwise.
    pub fn scaled_add(&self, a: f64, other: &Tensor, b: f64) -> Result<Tensor> {
        self.ensure_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(&x, &y)| a * x + b * y).collect();
        Ok(Tensor { shape: self.shape, data })
    }

    pub fn ensure_same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::invalid(format!("shape mismatch: {} vs {}", self.shape, other.shape)));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// One channel as its own `1×h×w` tensor.
    pub fn channel(&self, c: usize) -> Tensor {
        let n = self.shape.pixels();
        Tensor {
            shape: Shape::new(1, self.shape.height, self.shape.width),
            data: self.data[c * n..(c + 1) * n].to_vec(),
        }
    }
}

/// Binary keep-mask: `true` marks a known pixel that must be preserved.
///
/// Masks are binary by construction; [`Mask::from_values`] is the only way to
/// build one from real values and rejects anything other than 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    shape: Shape,
    keep: Vec<bool>,
}

impl Mask {
    pub fn ones(shape: Shape) -> Self {
        Mask { shape, keep: vec![true; shape.len()] }
    }

    pub fn zeros(shape: Shape) -> Self {
        Mask { shape, keep: vec![false; shape.len()] }
    }

    pub fn from_bools(shape: Shape, keep: Vec<bool>) -> Result<Self> {
        if keep.len() != shape.len() {
            return Err(Error::invalid(format!(
                "mask of shape {shape} needs {} values, got {}",
                shape.len(),
                keep.len()
            )));
        }
        Ok(Mask { shape, keep })
    }

    pub fn from_values(shape: Shape, values: &[f64]) -> Result<Self> {
        let keep = values
            .iter()
            .map(|&v| {
                if v == 1.0 {
                    Ok(true)
                } else if v == 0.0 {
                    Ok(false)
                } else {
                    Err(Error::invalid(format!("mask value {v} is not binary")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_bools(shape, keep)
    }

    /// Repeat a single-channel mask across `channels` channels.
    pub fn broadcast(&self, channels: usize) -> Result<Mask> {
        if self.shape.channels == channels {
            return Ok(self.clone());
        }
        if self.shape.channels != 1 {
            return Err(Error::invalid(format!(
                "cannot broadcast a {}-channel mask to {channels} channels",
                self.shape.channels
            )));
        }
        let mut keep = Vec::with_capacity(self.keep.len() * channels);
        for _ in 0..channels {
            keep.extend_from_slice(&self.keep);
        }
        Ok(Mask { shape: Shape::new(channels, self.shape.height, self.shape.width), keep })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.keep
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> bool {
        self.keep[self.shape.index(c, y, x)]
    }

    pub fn known_count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    pub fn all_known(&self) -> bool {
        self.keep.iter().all(|&k| k)
    }

    pub fn all_unknown(&self) -> bool {
        self.keep.iter().all(|&k| !k)
    }

    /// 1.0 for known, 0.0 for unknown.
    pub fn to_tensor(&self) -> Tensor {
        Tensor { shape: self.shape, data: self.keep.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect() }
    }
}
