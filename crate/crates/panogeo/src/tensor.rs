//! Dense value grids on the ERP lattice: multi-channel feature tensors and
//! single-channel depth maps.
//!
//! Both types are immutable after construction and validate that every
//! entry is finite, so downstream kernels never have to re-check. Layout is
//! row-major within each channel, channels contiguous: the value at
//! channel c, row r, column k lives at index `c*H*W + r*W + k`.

use crate::sphere::GridShape;
use crate::{Error, Result};

/// Channels x H x W tensor of 64-bit values.
#[derive(Debug, Clone, PartialEq)]
pub struct ErpTensor {
    channels: usize,
    shape: GridShape,
    data: Vec<f64>,
}

impl ErpTensor {
    /// # Errors
    /// Returns a shape error if `data` does not hold exactly
    /// `channels * H * W` values or `channels` is zero, and a domain error
    /// if any entry is non-finite.
    pub fn new(channels: usize, shape: GridShape, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Shape("tensor needs at least one channel".into()));
        }
        let want = channels * shape.len();
        if data.len() != want {
            return Err(Error::Shape(format!(
                "tensor data holds {} values, expected {want} for {channels}x{shape}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::Domain(format!(
                "tensor entry at flat index {bad} is {}, all entries must be finite",
                data[bad]
            )));
        }
        Ok(Self {
            channels,
            shape,
            data,
        })
    }

    pub fn zeros(channels: usize, shape: GridShape) -> Result<Self> {
        Self::new(channels, shape, vec![0.0; channels * shape.len()])
    }

    /// Builds a tensor by evaluating `f(channel, row, col)` at every cell.
    ///
    /// # Errors
    /// Domain error if `f` produces a non-finite value.
    pub fn from_fn(
        channels: usize,
        shape: GridShape,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * shape.len());
        for c in 0..channels {
            for r in 0..shape.height() {
                for k in 0..shape.width() {
                    data.push(f(c, r, k));
                }
            }
        }
        Self::new(channels, shape, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    /// All values, channel-major then row-major.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// One channel plane, row-major.
    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.shape.len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn at(&self, c: usize, r: usize, k: usize) -> f64 {
        self.data[(c * self.shape.height() + r) * self.shape.width() + k]
    }

    /// Elementwise sum of two tensors of identical layout.
    ///
    /// # Errors
    /// Shape error on any dimension mismatch.
    pub fn add(&self, other: &ErpTensor) -> Result<ErpTensor> {
        if self.channels != other.channels || self.shape != other.shape {
            return Err(Error::Shape(format!(
                "cannot add {}x{} tensor to {}x{} tensor",
                self.channels, self.shape, other.channels, other.shape
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        ErpTensor::new(self.channels, self.shape, data)
    }
}

/// H x W depth grid. Validity is never stored: a pixel counts as valid
/// exactly where the ground-truth depth is positive, and consumers derive
/// that mask on the fly.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    shape: GridShape,
    values: Vec<f64>,
}

impl DepthMap {
    /// # Errors
    /// Shape error if `values` is not exactly H * W long; domain error on
    /// non-finite entries.
    pub fn new(shape: GridShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::Shape(format!(
                "depth map holds {} values, expected {} for {shape}",
                values.len(),
                shape.len()
            )));
        }
        if let Some(bad) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::Domain(format!(
                "depth value at flat index {bad} is {}, all values must be finite",
                values[bad]
            )));
        }
        Ok(Self { shape, values })
    }

    pub fn from_fn(shape: GridShape, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(shape.len());
        for r in 0..shape.height() {
            for k in 0..shape.width() {
                values.push(f(r, k));
            }
        }
        Self::new(shape, values)
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, r: usize, k: usize) -> f64 {
        self.values[r * self.shape.width() + k]
    }

    /// Reinterprets the map as a one-channel tensor.
    pub fn to_tensor(&self) -> ErpTensor {
        ErpTensor::new(1, self.shape, self.values.clone())
            .expect("a valid depth map is a valid one-channel tensor")
    }

    /// Extracts a depth map from a one-channel tensor.
    ///
    /// # Errors
    /// Shape error when the tensor has more than one channel.
    pub fn from_tensor(t: &ErpTensor) -> Result<Self> {
        if t.channels() != 1 {
            return Err(Error::Shape(format!(
                "a depth map is single-channel, tensor has {} channels",
                t.channels()
            )));
        }
        Self::new(t.shape(), t.data().to_vec())
    }
}
