//! Central finite-difference checks of analytical loss gradients.

use alloc::format;
use alloc::vec::Vec;

use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::loss::PreparedLoss;

/// Denominator floor for relative errors, so near-zero gradient entries are
/// compared absolutely.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// Max over checked pixels of `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    /// Euclidean norm of the analytical gradient.
    pub grad_norm: f64,
    pub checked: usize,
    /// Valid pixels skipped because they sit within the tie margin.
    pub skipped: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// `(f(x + h e_k) - f(x - h e_k)) / 2h` for every `k` in `indices`.
pub fn central_differences<F>(x: &[f64], indices: &[usize], step: f64, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(indices.len());
    for &k in indices {
        probe[k] = x[k] + step;
        let up = f(&probe)?;
        probe[k] = x[k] - step;
        let down = f(&probe)?;
        probe[k] = x[k];
        out.push((up - down) / (2.0 * step));
    }
    Ok(out)
}

/// Compares the analytical gradient of `loss` at `pred` with central
/// differences. Pixels whose tie distance is below `tie_margin` are skipped.
pub fn check_gradient(
    loss: &PreparedLoss,
    pred: &DepthMap,
    gt: &DepthMap,
    step: f64,
    tie_margin: f64,
) -> Result<GradCheckReport> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Parameter(format!(
            "step must be positive, got {step}"
        )));
    }
    let analytic = loss
        .evaluate(pred, gt, true)?
        .gradient
        .expect("gradient requested");
    let ties = loss.tie_distance(pred, gt)?;
    let joint = pred.joint_mask(gt)?;
    let (checked, skipped): (Vec<usize>, Vec<usize>) = (0..pred.len())
        .filter(|&i| joint[i])
        .partition(|&i| ties[i] >= tie_margin);
    let numeric = central_differences(pred.values(), &checked, step, |values| {
        let probe = pred.with_values(values.to_vec())?;
        Ok(loss.evaluate(&probe, gt, false)?.value)
    })?;
    let max_rel_error = checked
        .iter()
        .zip(&numeric)
        .map(|(&k, &n)| relative_error(analytic[k], n))
        .fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_rel_error,
        grad_norm: libm::sqrt(analytic.iter().map(|g| g * g).sum()),
        checked: checked.len(),
        skipped: skipped.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_differences_of_quadratic() {
        let g = central_differences(
            &[1.0, -2.0],
            &[0, 1],
            1e-4,
            |x| Ok(x[0] * x[0] + 3.0 * x[1]),
        )
        .unwrap();
        assert!((g[0] - 2.0).abs() < 1e-8);
        assert!((g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
    }
}
