//! Depth-map representation and validity masking.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Row/column location of a pixel together with its row-major linear index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PixelIndex {
    pub row: usize,
    pub col: usize,
    pub linear: usize,
}

impl PixelIndex {
    pub fn from_row_col(row: usize, col: usize, width: usize) -> Self {
        Self {
            row,
            col,
            linear: row * width + col,
        }
    }

    pub fn from_linear(linear: usize, width: usize) -> Self {
        Self {
            row: linear / width,
            col: linear % width,
            linear,
        }
    }
}

/// An `height x width` grid of depth (or disparity) values with a validity
/// mask. Values are stored row-major, top row first.
///
/// Units are never interpreted: depth, inverse depth and disparity all work.
/// Invalid pixels may hold any value, including NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    /// Builds a map, checking dimensions and that every valid value is finite.
    pub fn new(height: usize, width: usize, values: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Parameter(format!(
                "map dimensions must be positive, got {height}x{width}"
            )));
        }
        let n = height * width;
        if values.len() != n || valid.len() != n {
            return Err(Error::Parameter(format!(
                "expected {n} values and mask entries, got {} and {}",
                values.len(),
                valid.len()
            )));
        }
        if let Some(i) = (0..n).find(|&i| valid[i] && !values[i].is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            height,
            width,
            values,
            valid,
        })
    }

    /// Builds a map with every pixel valid.
    pub fn from_values(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(height, width, values, vec![true; n])
    }

    /// Builds a map where non-finite values are marked invalid.
    pub fn from_values_masking_nonfinite(
        height: usize,
        width: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let valid = values.iter().map(|v| v.is_finite()).collect();
        Self::new(height, width, values, valid)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn is_valid(&self, linear: usize) -> bool {
        self.valid[linear]
    }

    /// Number of valid pixels.
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Linear indices of valid pixels, ascending.
    pub fn valid_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.valid[i]).collect()
    }

    pub fn same_shape(&self, other: &DepthMap) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub(crate) fn check_same_shape(&self, other: &DepthMap) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape {
                expected_height: self.height,
                expected_width: self.width,
                found_height: other.height,
                found_width: other.width,
            })
        }
    }

    /// Returns a copy with a different mask.
    pub fn with_mask(&self, valid: Vec<bool>) -> Result<Self> {
        Self::new(self.height, self.width, self.values.clone(), valid)
    }

    /// Returns a copy with different values, keeping the mask.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.height, self.width, values, self.valid.clone())
    }

    /// AND of both masks. Fails on shape mismatch.
    pub fn joint_mask(&self, other: &DepthMap) -> Result<Vec<bool>> {
        self.check_same_shape(other)?;
        Ok(self
            .valid
            .iter()
            .zip(&other.valid)
            .map(|(&a, &b)| a && b)
            .collect())
    }

    /// Applies `a * v + b` to every value; the mask is kept.
    pub fn affine(&self, scale: f64, shift: f64) -> Result<Self> {
        self.with_values(self.values.iter().map(|v| scale * v + shift).collect())
    }

    pub fn into_parts(self) -> (usize, usize, Vec<f64>, Vec<bool>) {
        (self.height, self.width, self.values, self.valid)
    }
}
