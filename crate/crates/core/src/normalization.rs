//! Per-context robust statistics and affine-invariant normalization.
//!
//! A context's values are normalized as `(v - median) / mad`, where `mad` is
//! the mean absolute deviation from the median. Both statistics are
//! affine-equivariant, so the normalized values do not change under
//! `v -> a*v + b` with `a > 0`.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Default clamp for the normalization denominator.
pub const DEFAULT_EPS: f64 = 1e-6;

/// Statistics of one context. `mad` is reported unclamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContextStats {
    pub median: f64,
    pub mad: f64,
    pub count: usize,
}

impl ContextStats {
    /// The denominator actually used: `max(mad, eps)`.
    pub fn scale(&self, eps: f64) -> f64 {
        self.mad.max(eps)
    }
}

/// Which sorted positions define the median.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum MedianSelection {
    /// Odd count: the single middle element (index into the input).
    Single(usize),
    /// Even count: the two middle elements, averaged.
    Pair(usize, usize),
}

/// Median plus the input positions it was taken from.
pub(crate) fn median_selection(values: &[f64]) -> Result<(f64, MedianSelection)> {
    let n = values.len();
    if n == 0 {
        return Err(Error::EmptyInput("median of an empty context"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    if n % 2 == 1 {
        let k = order[n / 2];
        Ok((values[k], MedianSelection::Single(k)))
    } else {
        let (a, b) = (order[n / 2 - 1], order[n / 2]);
        Ok((0.5 * (values[a] + values[b]), MedianSelection::Pair(a, b)))
    }
}

/// Middle element for odd counts, mean of the two middle elements for even.
pub fn median(values: &[f64]) -> Result<f64> {
    median_selection(values).map(|(m, _)| m)
}

/// Mean absolute deviation of `values` from `center`.
pub fn mad(values: &[f64], center: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("deviation of an empty context"));
    }
    let total: f64 = values.iter().map(|v| (v - center).abs()).sum();
    Ok(total / values.len() as f64)
}

/// Median and mean absolute deviation of a context.
pub fn context_stats(values: &[f64]) -> Result<ContextStats> {
    let m = median(values)?;
    Ok(ContextStats {
        median: m,
        mad: mad(values, m)?,
        count: values.len(),
    })
}

/// Normalizes every value to `(v - median) / max(mad, eps)`.
pub fn normalize_context(values: &[f64], eps: f64) -> Result<(Vec<f64>, ContextStats)> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Parameter(alloc::format!(
            "eps must be positive, got {eps}"
        )));
    }
    let stats = context_stats(values)?;
    let s = stats.scale(eps);
    let out = values.iter().map(|v| (v - stats.median) / s).collect();
    Ok((out, stats))
}
