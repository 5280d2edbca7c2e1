//! Minimal dense matrices with fixed-order arithmetic.
//!
//! The attention and embedding kernels need a handful of small matrix
//! products. General linear-algebra crates route these through blocked or
//! SIMD backends whose summation order can vary with the host CPU; seeded
//! demo output here must be bitwise identical everywhere, so products are
//! evaluated in one documented order: row by row, accumulating left to
//! right. At the grid sizes this crate targets, the naive product is also
//! entirely adequate.

use crate::{Error, Result};

/// Row-major rows x cols matrix of finite 64-bit values.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    /// # Errors
    /// Shape error if `data` is not exactly `rows * cols` long or either
    /// dimension is zero; domain error on non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape("matrix dimensions must be positive".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix data holds {} values, expected {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::Domain(format!(
                "matrix entry at flat index {bad} is {}, entries must be finite",
                data[bad]
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// # Errors
    /// Domain error if `f` produces a non-finite value.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Naive product in a fixed order: output row by row, each entry
    /// accumulated over k ascending.
    ///
    /// # Errors
    /// Shape error unless `self.cols == other.rows`.
    pub fn matmul(&self, other: &Mat) -> Result<Mat> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut data = vec![0.0; self.rows * other.cols];
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                let out = &mut data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Mat::new(self.rows, other.cols, data)
    }

    pub fn transposed(&self) -> Mat {
        let mut data = vec![0.0; self.rows * self.cols];
        for r in 0..self.rows {
            for c in 0..self.cols {
                data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Mat {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }
}

/// Replaces each row with its softmax, subtracting the row maximum first
/// for stability. Rows end up nonnegative and summing to 1.
pub(crate) fn softmax_rows(m: &mut Mat) {
    let cols = m.cols;
    for r in 0..m.rows {
        let row = &mut m.data[r * cols..(r + 1) * cols];
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        for x in row.iter_mut() {
            *x /= sum;
        }
    }
}
