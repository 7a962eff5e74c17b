//! Brute-force references written straight from the definitions, plus random
//! instance generators. Nothing here calls into the library's partition,
//! normalization or loss code.
#![allow(dead_code)]

use hdn_core::DepthMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random map with values in `[lo, hi)` and each pixel valid with
/// probability `p_valid`; at least `min_valid` pixels are forced valid.
pub fn random_map(
    rng: &mut ChaCha8Rng,
    h: usize,
    w: usize,
    lo: f64,
    hi: f64,
    p_valid: f64,
    min_valid: usize,
) -> DepthMap {
    let n = h * w;
    let values: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    let mut valid: Vec<bool> = (0..n).map(|_| rng.random_bool(p_valid)).collect();
    for v in valid.iter_mut().take(min_valid.min(n)) {
        *v = true;
    }
    DepthMap::new(h, w, values, valid).unwrap()
}

pub fn all_valid(rng: &mut ChaCha8Rng, h: usize, w: usize, lo: f64, hi: f64) -> DepthMap {
    random_map(rng, h, w, lo, hi, 1.0, 0)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn mean_abs_dev(values: &[f64], m: f64) -> f64 {
    values.iter().map(|v| (v - m).abs()).sum::<f64>() / values.len() as f64
}

/// Normalized value of `x` within `context_values`.
pub fn normalize_one(x: f64, context_values: &[f64], eps: f64) -> f64 {
    let m = median(context_values);
    let s = mean_abs_dev(context_values, m).max(eps);
    (x - m) / s
}

fn valid_pixels(map: &DepthMap) -> Vec<usize> {
    (0..map.len()).filter(|&i| map.valid()[i]).collect()
}

pub fn global(map: &DepthMap) -> Vec<Vec<usize>> {
    vec![valid_pixels(map)]
}

/// Cells via real-valued floor of `r * S / H`.
pub fn spatial(map: &DepthMap, s: usize) -> Vec<Vec<usize>> {
    let (h, w) = (map.height(), map.width());
    let mut out = Vec::new();
    for a in 0..s {
        for b in 0..s {
            let cell: Vec<usize> = valid_pixels(map)
                .into_iter()
                .filter(|&i| {
                    let (r, c) = (i / w, i % w);
                    (r as f64 * s as f64 / h as f64).floor() as usize == a
                        && (c as f64 * s as f64 / w as f64).floor() as usize == b
                })
                .collect();
            if !cell.is_empty() {
                out.push(cell);
            }
        }
    }
    out
}

/// Bin `b` of `S` holds `ceil((M - b) / S)` consecutive sorted pixels.
pub fn percentile(map: &DepthMap, s: usize) -> Vec<Vec<usize>> {
    let mut order = valid_pixels(map);
    let v = map.values();
    order.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap().then(a.cmp(&b)));
    let m = order.len();
    let mut out = Vec::new();
    let mut start = 0;
    for b in 0..s {
        let size = (m - b.min(m)).div_ceil(s);
        if size > 0 {
            let mut bin = order[start..start + size].to_vec();
            bin.sort();
            out.push(bin);
        }
        start += size;
    }
    out
}

/// Bin `k` is `[lo + k w, lo + (k+1) w)`, the last one closed.
pub fn range(map: &DepthMap, s: usize) -> Vec<Vec<usize>> {
    let idx = valid_pixels(map);
    let v = map.values();
    let lo = idx.iter().map(|&i| v[i]).fold(f64::INFINITY, f64::min);
    let hi = idx.iter().map(|&i| v[i]).fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return vec![idx];
    }
    let w = (hi - lo) / s as f64;
    let mut out = Vec::new();
    for k in 0..s {
        let (a, b) = (lo + k as f64 * w, lo + (k + 1) as f64 * w);
        let bin: Vec<usize> = idx
            .iter()
            .copied()
            .filter(|&i| {
                if k + 1 == s {
                    v[i] >= a
                } else {
                    v[i] >= a && v[i] < b
                }
            })
            .collect();
        if !bin.is_empty() {
            out.push(bin);
        }
    }
    out
}

pub fn build(kind: &str, map: &DepthMap, s: usize) -> Vec<Vec<usize>> {
    match kind {
        "spatial" => spatial(map, s),
        "depth_percentile" => percentile(map, s),
        "depth_range" => range(map, s),
        other => panic!("unknown kind {other}"),
    }
}

pub fn joint(pred: &DepthMap, gt: &DepthMap) -> Vec<bool> {
    (0..pred.len())
        .map(|i| pred.valid()[i] && gt.valid()[i])
        .collect()
}

/// Per-pixel mean over usable contexts, then mean over pixels that have one.
/// `levels[l]` lists the contexts of level `l`. Returns `None` if no pixel
/// has a usable context.
pub fn hdn(
    pred: &DepthMap,
    gt: &DepthMap,
    levels: &[Vec<Vec<usize>>],
    eps: f64,
    min_context: usize,
    skip_degenerate_gt: bool,
) -> Option<f64> {
    let jm = joint(pred, gt);
    let (pv, gv) = (pred.values(), gt.values());
    let mut total = 0.0;
    let mut used = 0usize;
    for i in (0..pred.len()).filter(|&i| jm[i]) {
        let mut terms = Vec::new();
        for level in levels {
            let Some(ctx) = level.iter().find(|c| c.contains(&i)) else {
                continue;
            };
            let members: Vec<usize> = ctx.iter().copied().filter(|&j| jm[j]).collect();
            if members.len() < min_context {
                continue;
            }
            let gvals: Vec<f64> = members.iter().map(|&j| gv[j]).collect();
            if skip_degenerate_gt && mean_abs_dev(&gvals, median(&gvals)) <= eps {
                continue;
            }
            let pvals: Vec<f64> = members.iter().map(|&j| pv[j]).collect();
            terms.push(
                (normalize_one(pv[i], &pvals, eps) - normalize_one(gv[i], &gvals, eps)).abs(),
            );
        }
        if !terms.is_empty() {
            total += terms.iter().sum::<f64>() / terms.len() as f64;
            used += 1;
        }
    }
    (used > 0).then(|| total / used as f64)
}

/// Unfiltered mean absolute difference over one global joint context.
pub fn ssi(pred: &DepthMap, gt: &DepthMap, eps: f64) -> f64 {
    let jm = joint(pred, gt);
    let idx: Vec<usize> = (0..pred.len()).filter(|&i| jm[i]).collect();
    let pvals: Vec<f64> = idx.iter().map(|&i| pred.values()[i]).collect();
    let gvals: Vec<f64> = idx.iter().map(|&i| gt.values()[i]).collect();
    idx.iter()
        .map(|&i| {
            (normalize_one(pred.values()[i], &pvals, eps)
                - normalize_one(gt.values()[i], &gvals, eps))
            .abs()
        })
        .sum::<f64>()
        / idx.len() as f64
}

pub fn l1(pred: &DepthMap, gt: &DepthMap) -> f64 {
    let jm = joint(pred, gt);
    let idx: Vec<usize> = (0..pred.len()).filter(|&i| jm[i]).collect();
    idx.iter()
        .map(|&i| (pred.values()[i] - gt.values()[i]).abs())
        .sum::<f64>()
        / idx.len() as f64
}

/// Levels built by the reference builders from `gt` under the joint mask.
pub fn levels_for(
    kind: &str,
    pred: &DepthMap,
    gt: &DepthMap,
    sizes: &[usize],
) -> Vec<Vec<Vec<usize>>> {
    let masked = gt.with_mask(joint(pred, gt)).unwrap();
    sizes.iter().map(|&s| build(kind, &masked, s)).collect()
}

/// Sum of squared alignment residuals.
pub fn alignment_objective(pred: &DepthMap, gt: &DepthMap, s: f64, t: f64) -> f64 {
    let jm = joint(pred, gt);
    (0..pred.len())
        .filter(|&i| jm[i])
        .map(|i| {
            let r = s * pred.values()[i] + t - gt.values()[i];
            r * r
        })
        .sum()
}
