//! Evaluation protocol: least-squares scale/shift alignment followed by
//! AbsRel and the δ1 threshold accuracy.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::depth::DepthMap;
use crate::error::{Error, Result};

/// δ1 threshold on `max(d/d*, d*/d)`, strict.
pub const DELTA1_THRESHOLD: f64 = 1.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub absrel: f64,
    pub delta1: f64,
    /// Applied to the prediction before scoring (`1` when not aligned).
    pub scale: f64,
    /// Applied to the prediction before scoring (`0` when not aligned).
    pub shift: f64,
    /// Joint-valid pixels with strictly positive ground truth.
    pub pixels: usize,
    /// Joint-valid pixels dropped because the ground truth is `<= 0`.
    pub excluded: usize,
    pub aligned: bool,
}

fn joint_indices(pred: &DepthMap, gt: &DepthMap) -> Result<Vec<usize>> {
    let joint = pred.joint_mask(gt)?;
    Ok((0..joint.len()).filter(|&i| joint[i]).collect())
}

/// `(s, t)` minimizing `sum (s*d + t - d*)^2` over joint-valid pixels.
pub fn align_scale_shift(pred: &DepthMap, gt: &DepthMap) -> Result<(f64, f64)> {
    let idx = joint_indices(pred, gt)?;
    if idx.len() < 2 {
        return Err(Error::EmptyInput(
            "alignment needs at least two joint-valid pixels",
        ));
    }
    let (pv, gv) = (pred.values(), gt.values());
    let n = idx.len() as f64;
    let mean_d = idx.iter().map(|&i| pv[i]).sum::<f64>() / n;
    let mean_g = idx.iter().map(|&i| gv[i]).sum::<f64>() / n;
    let (mut sdd, mut sdg) = (0.0, 0.0);
    for &i in &idx {
        let dd = pv[i] - mean_d;
        sdd += dd * dd;
        sdg += dd * (gv[i] - mean_g);
    }
    if sdd == 0.0 {
        return Err(Error::DegenerateAlignment);
    }
    let scale = sdg / sdd;
    Ok((scale, mean_g - scale * mean_d))
}

/// Joint-valid indices with positive ground truth, plus the excluded count.
fn scored_indices(pred: &DepthMap, gt: &DepthMap) -> Result<(Vec<usize>, usize)> {
    let idx = joint_indices(pred, gt)?;
    let total = idx.len();
    let kept: Vec<usize> = idx.into_iter().filter(|&i| gt.values()[i] > 0.0).collect();
    if kept.is_empty() {
        return Err(Error::EmptyInput(
            "no joint-valid pixel with positive ground truth",
        ));
    }
    let excluded = total - kept.len();
    Ok((kept, excluded))
}

fn absrel_on(pv: &[f64], gv: &[f64], idx: &[usize]) -> f64 {
    idx.iter()
        .map(|&i| (pv[i] - gv[i]).abs() / gv[i])
        .sum::<f64>()
        / idx.len() as f64
}

fn delta1_on(pv: &[f64], gv: &[f64], idx: &[usize]) -> f64 {
    let hits = idx
        .iter()
        .filter(|&&i| {
            let (d, g) = (pv[i], gv[i]);
            d > 0.0 && (d / g).max(g / d) < DELTA1_THRESHOLD
        })
        .count();
    hits as f64 / idx.len() as f64
}

/// Mean of `|d - d*| / d*` over joint-valid pixels with `d* > 0`.
pub fn absrel(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    let (idx, _) = scored_indices(pred, gt)?;
    Ok(absrel_on(pred.values(), gt.values(), &idx))
}

/// Fraction of joint-valid pixels with `d* > 0` and `max(d/d*, d*/d) < 1.25`.
/// Non-positive predictions count as failures.
pub fn delta1(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    let (idx, _) = scored_indices(pred, gt)?;
    Ok(delta1_on(pred.values(), gt.values(), &idx))
}

/// Scores `pred` against `gt`, optionally aligning first.
pub fn evaluate(pred: &DepthMap, gt: &DepthMap, align: bool) -> Result<EvalReport> {
    let (scale, shift) = if align {
        align_scale_shift(pred, gt)?
    } else {
        (1.0, 0.0)
    };
    let (idx, excluded) = scored_indices(pred, gt)?;
    let aligned: Vec<f64> = pred.values().iter().map(|v| scale * v + shift).collect();
    Ok(EvalReport {
        absrel: absrel_on(&aligned, gt.values(), &idx),
        delta1: delta1_on(&aligned, gt.values(), &idx),
        scale,
        shift,
        pixels: idx.len(),
        excluded,
        aligned: align,
    })
}

/// Up to `n` joint-valid `(pred, gt)` pairs drawn without replacement from a
/// seeded generator, ordered by pixel index. All pairs when `n >= M`.
pub fn scatter_sample(
    pred: &DepthMap,
    gt: &DepthMap,
    n: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if n == 0 {
        return Err(Error::Parameter("sample size must be positive".into()));
    }
    let idx = joint_indices(pred, gt)?;
    if idx.is_empty() {
        return Err(Error::EmptyInput("joint valid mask is empty"));
    }
    let picked: Vec<usize> = if n >= idx.len() {
        idx
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut chosen: Vec<usize> = rand::seq::index::sample(&mut rng, idx.len(), n)
            .into_iter()
            .map(|k| idx[k])
            .collect();
        chosen.sort_unstable();
        chosen
    };
    Ok(picked
        .into_iter()
        .map(|i| (pred.values()[i], gt.values()[i]))
        .collect())
}
