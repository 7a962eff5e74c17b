//! Scale-and-shift invariant (SSI) and hierarchical (HDN) depth losses with
//! analytical gradients with respect to the prediction.
//!
//! For every context `u` a pixel belongs to, prediction and ground truth are
//! normalized over `u` and the absolute difference is taken. A pixel's loss
//! is the mean over its contexts; the total is the mean over pixels. SSI is
//! the special case of a single global context.
//!
//! Statistics always use the joint mask (prediction valid AND ground truth
//! valid). Contexts with fewer than `min_context` joint-valid pixels are
//! dropped, as are contexts with a constant ground truth when
//! `gt_degenerate_skip` is set. Pixels left with no context are excluded
//! from the outer mean.
//!
//! Gradients treat the median selection and every `sign` as locally
//! constant; at exact ties the derivative of the branch selected by the sort
//! order is returned. Residuals with magnitude below [`RESIDUAL_ZERO`] get a
//! zero subgradient so exact minima report a zero gradient.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::contexts::{self, ContextHierarchy, ContextKind, LevelSpec};
use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::normalization::{self, MedianSelection, DEFAULT_EPS};

/// Normalized residuals at or below this magnitude are treated as zero when
/// choosing the subgradient of `|r|`.
pub const RESIDUAL_ZERO: f64 = 1e-10;

/// Smallest context size that is ever normalized.
pub const DEFAULT_MIN_CONTEXT: usize = 2;

/// Contexts plus the numeric knobs of the hierarchical loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    hierarchy: ContextHierarchy,
    eps: f64,
    min_context: usize,
    gt_degenerate_skip: bool,
}

impl LossConfig {
    /// Defaults: `eps = 1e-6`, `min_context = 2`, degenerate ground-truth
    /// contexts skipped.
    pub fn new(hierarchy: ContextHierarchy) -> Self {
        Self {
            hierarchy,
            eps: DEFAULT_EPS,
            min_context: DEFAULT_MIN_CONTEXT,
            gt_degenerate_skip: true,
        }
    }

    /// Builds the hierarchy from `gt` restricted to the joint mask of the
    /// pair.
    pub fn for_pair(pred: &DepthMap, gt: &DepthMap, spec: &LevelSpec) -> Result<Self> {
        let masked = gt.with_mask(pred.joint_mask(gt)?)?;
        Ok(Self::new(contexts::build_hierarchy(&masked, spec)?))
    }

    pub fn with_eps(mut self, eps: f64) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::Parameter(format!("eps must be positive, got {eps}")));
        }
        self.eps = eps;
        Ok(self)
    }

    pub fn with_min_context(mut self, min_context: usize) -> Result<Self> {
        if min_context < 2 {
            return Err(Error::Parameter(format!(
                "min_context must be >= 2, got {min_context}"
            )));
        }
        self.min_context = min_context;
        Ok(self)
    }

    pub fn with_gt_degenerate_skip(mut self, skip: bool) -> Self {
        self.gt_degenerate_skip = skip;
        self
    }

    pub fn hierarchy(&self) -> &ContextHierarchy {
        &self.hierarchy
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn min_context(&self) -> usize {
        self.min_context
    }

    pub fn gt_degenerate_skip(&self) -> bool {
        self.gt_degenerate_skip
    }
}

/// Result of a loss evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub value: f64,
    /// `dL/dd` per prediction pixel, row-major. Zero at invalid pixels and
    /// at pixels without any usable context.
    pub gradient: Option<Vec<f64>>,
    /// Each level's share of `value`; the shares sum to `value`.
    pub per_level: Vec<(String, f64)>,
    /// Pixels with at least one usable context.
    pub used_pixels: usize,
}

/// One side (prediction or ground truth) of a normalized context.
struct Normalized {
    raw: Vec<f64>,
    norm: Vec<f64>,
    median: f64,
    selection: MedianSelection,
    scale: f64,
    clamped: bool,
}

impl Normalized {
    fn new(raw: Vec<f64>, eps: f64) -> Result<Self> {
        let (median, selection) = normalization::median_selection(&raw)?;
        let mad = normalization::mad(&raw, median)?;
        let scale = mad.max(eps);
        let norm = raw.iter().map(|v| (v - median) / scale).collect();
        Ok(Self {
            raw,
            norm,
            median,
            selection,
            scale,
            clamped: mad <= eps,
        })
    }

    /// Adds `sum_j coef_j * d(norm_j)/d(raw_k)` to `grad[members[k]]`.
    fn backprop(&self, members: &[usize], coef: &[f64], grad: &mut [f64]) {
        let n = self.raw.len();
        let s = self.scale;
        let sum_c: f64 = coef.iter().sum();
        let sum_cn: f64 = coef.iter().zip(&self.norm).map(|(c, v)| c * v).sum();
        let dm = |k: usize| -> f64 {
            match self.selection {
                MedianSelection::Single(j) => f64::from(u8::from(k == j)),
                MedianSelection::Pair(a, b) => {
                    0.5 * (f64::from(u8::from(k == a)) + f64::from(u8::from(k == b)))
                }
            }
        };
        let sign = |x: f64| -> f64 {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        };
        let sum_sign: f64 = self.raw.iter().map(|&d| sign(d - self.median)).sum();
        for (k, &pixel) in members.iter().enumerate() {
            let dm_k = dm(k);
            let ds_k = if self.clamped {
                0.0
            } else {
                (sign(self.raw[k] - self.median) - sum_sign * dm_k) / n as f64
            };
            grad[pixel] += (coef[k] - sum_c * dm_k - sum_cn * ds_k) / s;
        }
    }

    /// Distance (in raw units) to the nearest change of median selection or
    /// of a `sign(raw - median)`.
    fn tie_distance(&self) -> f64 {
        let mut sorted = self.raw.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mut dist = f64::INFINITY;
        // order changes among the elements around the middle
        let lo = (n / 2).saturating_sub(2);
        let hi = (n / 2 + 2).min(n);
        for w in sorted[lo..hi].windows(2) {
            dist = dist.min(w[1] - w[0]);
        }
        for &d in &self.raw {
            let gap = (d - self.median).abs();
            if gap > 0.0 {
                dist = dist.min(gap);
            }
        }
        dist
    }
}

struct ActiveContext {
    level: usize,
    members: Vec<usize>,
    pred: Normalized,
    gt: Normalized,
}

impl ActiveContext {
    fn residual(&self, k: usize) -> f64 {
        self.pred.norm[k] - self.gt.norm[k]
    }
}

/// Collects the usable contexts of every level, in level then context order.
fn active_contexts(
    pred: &DepthMap,
    gt: &DepthMap,
    cfg: &LossConfig,
    joint: &[bool],
) -> Result<Vec<ActiveContext>> {
    if cfg.hierarchy.pixel_count() != pred.len() {
        return Err(Error::Parameter(format!(
            "hierarchy covers {} pixels but maps have {}",
            cfg.hierarchy.pixel_count(),
            pred.len()
        )));
    }
    let (pv, gv) = (pred.values(), gt.values());
    let mut out = Vec::new();
    for (level, part) in cfg.hierarchy.levels().iter().enumerate() {
        for ctx in part.contexts() {
            let members: Vec<usize> = ctx.iter().copied().filter(|&i| joint[i]).collect();
            if members.len() < cfg.min_context {
                continue;
            }
            let gt_side = Normalized::new(members.iter().map(|&i| gv[i]).collect(), cfg.eps)?;
            if cfg.gt_degenerate_skip && gt_side.clamped {
                continue;
            }
            let pred_side = Normalized::new(members.iter().map(|&i| pv[i]).collect(), cfg.eps)?;
            out.push(ActiveContext {
                level,
                members,
                pred: pred_side,
                gt: gt_side,
            });
        }
    }
    Ok(out)
}

/// Averages residuals per pixel over its contexts, then over pixels.
fn reduce(
    pixel_count: usize,
    contexts: &[ActiveContext],
    level_tags: Vec<String>,
    want_grad: bool,
) -> Result<LossReport> {
    let mut n_ctx = vec![0usize; pixel_count];
    for c in contexts {
        for &i in &c.members {
            n_ctx[i] += 1;
        }
    }
    let used = n_ctx.iter().filter(|&&n| n > 0).count();
    if used == 0 {
        return Err(Error::Degenerate("no usable context after filtering"));
    }
    let inv_used = 1.0 / used as f64;

    let mut per_pixel = vec![0.0; pixel_count];
    let mut per_level = vec![0.0; level_tags.len()];
    for c in contexts {
        for (k, &i) in c.members.iter().enumerate() {
            let term = c.residual(k).abs() / n_ctx[i] as f64;
            per_pixel[i] += term;
            per_level[c.level] += term;
        }
    }
    let value = per_pixel.iter().sum::<f64>() * inv_used;

    let gradient = want_grad.then(|| {
        let mut grad = vec![0.0; pixel_count];
        for c in contexts {
            let coef: Vec<f64> = c
                .members
                .iter()
                .enumerate()
                .map(|(k, &i)| {
                    let r = c.residual(k);
                    let w = inv_used / n_ctx[i] as f64;
                    if r > RESIDUAL_ZERO {
                        w
                    } else if r < -RESIDUAL_ZERO {
                        -w
                    } else {
                        0.0
                    }
                })
                .collect();
            c.pred.backprop(&c.members, &coef, &mut grad);
        }
        grad
    });

    Ok(LossReport {
        value,
        gradient,
        per_level: level_tags
            .into_iter()
            .zip(per_level)
            .map(|(t, v)| (t, v * inv_used))
            .collect(),
        used_pixels: used,
    })
}

fn hdn_eval(
    pred: &DepthMap,
    gt: &DepthMap,
    cfg: &LossConfig,
    want_grad: bool,
) -> Result<LossReport> {
    let joint = pred.joint_mask(gt)?;
    if !joint.contains(&true) {
        return Err(Error::EmptyInput("joint valid mask is empty"));
    }
    let active = active_contexts(pred, gt, cfg, &joint)?;
    let tags = cfg
        .hierarchy
        .levels()
        .iter()
        .map(|p| p.tag().to_string())
        .collect();
    reduce(pred.len(), &active, tags, want_grad)
}

/// Hierarchical loss value (no gradient).
pub fn hdn_loss(pred: &DepthMap, gt: &DepthMap, cfg: &LossConfig) -> Result<LossReport> {
    hdn_eval(pred, gt, cfg, false)
}

/// Hierarchical loss with its gradient filled in.
pub fn hdn_loss_and_gradient(
    pred: &DepthMap,
    gt: &DepthMap,
    cfg: &LossConfig,
) -> Result<LossReport> {
    hdn_eval(pred, gt, cfg, true)
}

/// `dL/dd` of the hierarchical loss, row-major.
pub fn hdn_gradient(pred: &DepthMap, gt: &DepthMap, cfg: &LossConfig) -> Result<Vec<f64>> {
    Ok(hdn_eval(pred, gt, cfg, true)?
        .gradient
        .expect("gradient requested"))
}

fn ssi_eval(pred: &DepthMap, gt: &DepthMap, eps: f64, want_grad: bool) -> Result<LossReport> {
    let joint = pred.joint_mask(gt)?;
    let members: Vec<usize> = (0..joint.len()).filter(|&i| joint[i]).collect();
    if members.is_empty() {
        return Err(Error::EmptyInput("joint valid mask is empty"));
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Parameter(format!("eps must be positive, got {eps}")));
    }
    let ctx = ActiveContext {
        level: 0,
        pred: Normalized::new(members.iter().map(|&i| pred.values()[i]).collect(), eps)?,
        gt: Normalized::new(members.iter().map(|&i| gt.values()[i]).collect(), eps)?,
        members,
    };
    reduce(pred.len(), &[ctx], vec!["global".into()], want_grad)
}

/// Mean absolute difference of the globally normalized prediction and
/// ground truth over the joint-valid pixels.
pub fn ssi_loss(pred: &DepthMap, gt: &DepthMap, eps: f64) -> Result<LossReport> {
    ssi_eval(pred, gt, eps, false)
}

pub fn ssi_loss_and_gradient(pred: &DepthMap, gt: &DepthMap, eps: f64) -> Result<LossReport> {
    ssi_eval(pred, gt, eps, true)
}

fn l1_term(pred: &DepthMap, gt: &DepthMap, want_grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
    let joint = pred.joint_mask(gt)?;
    let m = joint.iter().filter(|&&v| v).count();
    if m == 0 {
        return Err(Error::EmptyInput("joint valid mask is empty"));
    }
    let (pv, gv) = (pred.values(), gt.values());
    let mut total = 0.0;
    let mut grad = want_grad.then(|| vec![0.0; pred.len()]);
    for i in (0..joint.len()).filter(|&i| joint[i]) {
        let diff = pv[i] - gv[i];
        total += diff.abs();
        if let Some(g) = grad.as_mut() {
            g[i] = if diff > 0.0 {
                1.0 / m as f64
            } else if diff < 0.0 {
                -1.0 / m as f64
            } else {
                0.0
            };
        }
    }
    Ok((total / m as f64, grad))
}

fn l1_plus_hdn_eval(
    pred: &DepthMap,
    gt: &DepthMap,
    cfg: &LossConfig,
    lambda: f64,
    want_grad: bool,
) -> Result<LossReport> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Parameter(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    let (l1, l1_grad) = l1_term(pred, gt, want_grad)?;
    let mut per_level = vec![(String::from("l1"), l1)];
    if lambda == 0.0 {
        return Ok(LossReport {
            value: l1,
            gradient: l1_grad,
            per_level,
            used_pixels: pred.joint_mask(gt)?.iter().filter(|&&v| v).count(),
        });
    }
    let hdn = hdn_eval(pred, gt, cfg, want_grad)?;
    per_level.extend(
        hdn.per_level
            .into_iter()
            .map(|(tag, v)| (format!("hdn:{tag}"), lambda * v)),
    );
    let gradient = match (l1_grad, hdn.gradient) {
        (Some(mut a), Some(b)) => {
            for (x, y) in a.iter_mut().zip(b) {
                *x += lambda * y;
            }
            Some(a)
        }
        _ => None,
    };
    Ok(LossReport {
        value: l1 + lambda * hdn.value,
        gradient,
        per_level,
        used_pixels: hdn.used_pixels,
    })
}

/// Mean absolute error plus `lambda` times the hierarchical loss.
pub fn l1_plus_hdn(
    pred: &DepthMap,
    gt: &DepthMap,
    cfg: &LossConfig,
    lambda: f64,
) -> Result<LossReport> {
    l1_plus_hdn_eval(pred, gt, cfg, lambda, false)
}

pub fn l1_plus_hdn_and_gradient(
    pred: &DepthMap,
    gt: &DepthMap,
    cfg: &LossConfig,
    lambda: f64,
) -> Result<LossReport> {
    l1_plus_hdn_eval(pred, gt, cfg, lambda, true)
}

/// The hierarchical loss restricted to one level of the given kind and size.
pub fn local_only_loss(
    pred: &DepthMap,
    gt: &DepthMap,
    kind: ContextKind,
    s: usize,
    eps: f64,
    min_context: usize,
) -> Result<LossReport> {
    let spec = LevelSpec::new(kind, vec![s])?;
    let cfg = LossConfig::for_pair(pred, gt, &spec)?
        .with_eps(eps)?
        .with_min_context(min_context)?;
    hdn_loss(pred, gt, &cfg)
}

fn batch_eval(
    preds: &[DepthMap],
    gts: &[DepthMap],
    eps: f64,
    want_grad: bool,
) -> Result<LossReport> {
    if preds.is_empty() {
        return Err(Error::EmptyInput("batch is empty"));
    }
    if preds.len() != gts.len() {
        return Err(Error::Parameter(format!(
            "{} predictions but {} ground truths",
            preds.len(),
            gts.len()
        )));
    }
    let mut members = Vec::new();
    let (mut pv, mut gv) = (Vec::new(), Vec::new());
    let mut base = 0;
    for (p, g) in preds.iter().zip(gts) {
        let joint = p.joint_mask(g)?;
        for i in (0..joint.len()).filter(|&i| joint[i]) {
            members.push(base + i);
            pv.push(p.values()[i]);
            gv.push(g.values()[i]);
        }
        base += p.len();
    }
    if members.is_empty() {
        return Err(Error::EmptyInput("joint valid mask is empty"));
    }
    let ctx = ActiveContext {
        level: 0,
        pred: Normalized::new(pv, eps)?,
        gt: Normalized::new(gv, eps)?,
        members,
    };
    reduce(base, &[ctx], vec!["batch".into()], want_grad)
}

/// SSI with one context spanning every pair of the batch. A gradient, when
/// requested, is laid out over the concatenated pixel space.
pub fn batch_ssi_loss(preds: &[DepthMap], gts: &[DepthMap], eps: f64) -> Result<LossReport> {
    batch_eval(preds, gts, eps, false)
}

pub fn batch_ssi_loss_and_gradient(
    preds: &[DepthMap],
    gts: &[DepthMap],
    eps: f64,
) -> Result<LossReport> {
    batch_eval(preds, gts, eps, true)
}

/// Per pixel, the distance in prediction units to the nearest point where
/// the loss switches branch (median selection, a deviation sign or a
/// residual sign) in any context the pixel belongs to. Infinite for pixels
/// without a usable context.
pub fn hdn_tie_distance(pred: &DepthMap, gt: &DepthMap, cfg: &LossConfig) -> Result<Vec<f64>> {
    let joint = pred.joint_mask(gt)?;
    let active = active_contexts(pred, gt, cfg, &joint)?;
    Ok(tie_distance_of(pred.len(), &active))
}

/// [`hdn_tie_distance`] for the single global context of SSI.
pub fn ssi_tie_distance(pred: &DepthMap, gt: &DepthMap, eps: f64) -> Result<Vec<f64>> {
    let joint = pred.joint_mask(gt)?;
    let global = contexts::global_context(&gt.with_mask(joint.clone())?)?;
    // SSI never filters its context
    let cfg = LossConfig {
        hierarchy: ContextHierarchy::from_partitions(vec![global])?,
        eps,
        min_context: 1,
        gt_degenerate_skip: false,
    };
    let active = active_contexts(pred, gt, &cfg, &joint)?;
    Ok(tie_distance_of(pred.len(), &active))
}

fn tie_distance_of(pixel_count: usize, active: &[ActiveContext]) -> Vec<f64> {
    let mut out = vec![f64::INFINITY; pixel_count];
    for c in active {
        let mut d = c.pred.tie_distance();
        for k in 0..c.members.len() {
            d = d.min(c.residual(k).abs() * c.pred.scale);
        }
        for &i in &c.members {
            out[i] = out[i].min(d);
        }
    }
    out
}

/// Loss selector shared by the gradient checker and the fitting harness.
#[derive(Debug, Clone, PartialEq)]
pub enum LossKind {
    Ssi,
    Hdn(LevelSpec),
    L1PlusHdn { levels: LevelSpec, lambda: f64 },
}

impl LossKind {
    pub fn label(&self) -> String {
        match self {
            LossKind::Ssi => "ssi".into(),
            LossKind::Hdn(spec) => level_label("hdn", spec),
            LossKind::L1PlusHdn { levels, lambda } => {
                format!("{}+l1(lambda={lambda})", level_label("hdn", levels))
            }
        }
    }
}

fn level_label(prefix: &str, spec: &LevelSpec) -> String {
    let short = match spec.kind() {
        ContextKind::Spatial => "s",
        ContextKind::DepthPercentile => "dp",
        ContextKind::DepthRange => "dr",
    };
    let sizes: Vec<String> = spec.sizes().iter().map(|s| s.to_string()).collect();
    format!("{prefix}_{short}{{{}}}", sizes.join(","))
}

/// A loss bound to one ground truth, with its contexts built once.
#[derive(Debug, Clone)]
pub struct PreparedLoss {
    kind: LossKind,
    eps: f64,
    cfg: Option<LossConfig>,
}

impl PreparedLoss {
    /// Contexts are computed from `gt` restricted to `mask` (typically the
    /// joint mask the prediction will have).
    pub fn new(
        kind: LossKind,
        gt: &DepthMap,
        mask: &[bool],
        eps: f64,
        min_context: usize,
    ) -> Result<Self> {
        let cfg = match &kind {
            LossKind::Ssi => None,
            LossKind::Hdn(spec) | LossKind::L1PlusHdn { levels: spec, .. } => {
                let masked = gt.with_mask(mask.to_vec())?;
                Some(
                    LossConfig::new(contexts::build_hierarchy(&masked, spec)?)
                        .with_eps(eps)?
                        .with_min_context(min_context)?,
                )
            }
        };
        Ok(Self { kind, eps, cfg })
    }

    pub fn kind(&self) -> &LossKind {
        &self.kind
    }

    pub fn config(&self) -> Option<&LossConfig> {
        self.cfg.as_ref()
    }

    pub fn evaluate(&self, pred: &DepthMap, gt: &DepthMap, want_grad: bool) -> Result<LossReport> {
        match (&self.kind, &self.cfg) {
            (LossKind::Ssi, _) => ssi_eval(pred, gt, self.eps, want_grad),
            (LossKind::Hdn(_), Some(cfg)) => hdn_eval(pred, gt, cfg, want_grad),
            (LossKind::L1PlusHdn { lambda, .. }, Some(cfg)) => {
                l1_plus_hdn_eval(pred, gt, cfg, *lambda, want_grad)
            }
            _ => unreachable!("hierarchical kinds always carry a config"),
        }
    }

    pub fn tie_distance(&self, pred: &DepthMap, gt: &DepthMap) -> Result<Vec<f64>> {
        match (&self.kind, &self.cfg) {
            (LossKind::Ssi, _) => ssi_tie_distance(pred, gt, self.eps),
            (LossKind::Hdn(_), Some(cfg)) => hdn_tie_distance(pred, gt, cfg),
            (LossKind::L1PlusHdn { .. }, Some(cfg)) => {
                let mut d = hdn_tie_distance(pred, gt, cfg)?;
                for (i, di) in d.iter_mut().enumerate() {
                    if pred.is_valid(i) && gt.is_valid(i) {
                        *di = di.min((pred.values()[i] - gt.values()[i]).abs());
                    }
                }
                Ok(d)
            }
            _ => unreachable!("hierarchical kinds always carry a config"),
        }
    }
}
