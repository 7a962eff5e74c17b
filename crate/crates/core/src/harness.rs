//! Desk-scale experiments: synthetic scenes and direct gradient-descent
//! fitting of a prediction map under a chosen loss.
//!
//! Instead of training a network, the prediction pixels themselves are the
//! parameters. That isolates how each loss weighs fine local detail against
//! global structure.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::contexts::{ContextKind, LevelSpec};
use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::loss::{LossKind, PreparedLoss, DEFAULT_MIN_CONTEXT};
use crate::metrics;
use crate::normalization::{self, DEFAULT_EPS};

/// Half-open pixel rectangle `[top, bottom) x [left, right)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Rect {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.top..self.bottom).contains(&row) && (self.left..self.right).contains(&col)
    }
}

/// A far background plane with a closer rectangular object carrying a
/// sinusoidal ridge pattern along the columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub background_depth: f64,
    pub foreground: Rect,
    pub base_depth: f64,
    pub ridge_amplitude: f64,
    pub ridge_period: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SceneSpec {
    /// 64x64, background 10, centered 32x32 object at depth 1 with ridges of
    /// amplitude 0.2 and period 8 px, no noise, seed 7.
    pub fn standard() -> Self {
        Self {
            height: 64,
            width: 64,
            background_depth: 10.0,
            foreground: Rect {
                top: 16,
                bottom: 48,
                left: 16,
                right: 48,
            },
            base_depth: 1.0,
            ridge_amplitude: 0.2,
            ridge_period: 8.0,
            noise_sigma: 0.0,
            seed: 7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Parameter(msg));
        if self.height == 0 || self.width == 0 {
            return fail(format!(
                "scene size {}x{} must be positive",
                self.height, self.width
            ));
        }
        let r = self.foreground;
        if r.top >= r.bottom || r.left >= r.right || r.bottom > self.height || r.right > self.width
        {
            return fail(format!(
                "foreground rows {}..{} cols {}..{} must be a non-empty rectangle inside the image",
                r.top, r.bottom, r.left, r.right
            ));
        }
        let positive = [
            ("background_depth", self.background_depth),
            ("base_depth", self.base_depth),
            ("ridge_period", self.ridge_period),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        if self.ridge_amplitude.is_nan()
            || self.ridge_amplitude < 0.0
            || self.noise_sigma.is_nan()
            || self.noise_sigma < 0.0
        {
            return fail("ridge_amplitude and noise_sigma must be non-negative".into());
        }
        if (self.base_depth + self.ridge_amplitude).partial_cmp(&self.background_depth)
            != Some(core::cmp::Ordering::Less)
        {
            return fail("foreground must be strictly closer than the background".into());
        }
        Ok(())
    }

    /// Row-major mask of the foreground rectangle.
    pub fn foreground_mask(&self) -> Vec<bool> {
        (0..self.height * self.width)
            .map(|i| self.foreground.contains(i / self.width, i % self.width))
            .collect()
    }
}

/// Renders the scene's ground truth. Every pixel is valid.
pub fn generate_scene(spec: &SceneSpec) -> Result<DepthMap> {
    spec.validate()?;
    let noise = Normal::new(0.0, spec.noise_sigma)
        .map_err(|e| Error::Parameter(format!("noise_sigma: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut values = Vec::with_capacity(spec.height * spec.width);
    for r in 0..spec.height {
        for c in 0..spec.width {
            let clean = if spec.foreground.contains(r, c) {
                spec.base_depth
                    + spec.ridge_amplitude * libm::sin(2.0 * PI * c as f64 / spec.ridge_period)
            } else {
                spec.background_depth
            };
            let jitter = if spec.noise_sigma > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            values.push(clean + jitter);
        }
    }
    DepthMap::from_values(spec.height, spec.width, values)
}

/// Starting prediction for a fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Every pixel at the ground-truth median.
    Constant,
    /// Ground truth plus Gaussian noise of the given standard deviation.
    NoisyGt { sigma: f64 },
    /// Uniform over the ground-truth value range.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub loss: LossKind,
    pub steps: usize,
    pub step_size: f64,
    pub init: Init,
    pub seed: u64,
    pub eps: f64,
    pub min_context: usize,
}

impl FitConfig {
    pub fn new(loss: LossKind, steps: usize, step_size: f64, init: Init, seed: u64) -> Self {
        Self {
            loss,
            steps,
            step_size,
            init,
            seed,
            eps: DEFAULT_EPS,
            min_context: DEFAULT_MIN_CONTEXT,
        }
    }

    /// The configuration of the detail-preservation comparison: start from
    /// the ground truth corrupted by noise of sigma 0.5, 200 steps of size
    /// 100, seed 11.
    pub fn standard(loss: LossKind) -> Self {
        Self::new(loss, 200, 100.0, Init::NoisyGt { sigma: 0.5 }, 11)
    }

    pub fn standard_ssi() -> Self {
        Self::standard(LossKind::Ssi)
    }

    pub fn standard_hdn_dr() -> Self {
        Self::standard(LossKind::Hdn(LevelSpec::hdn_depth(ContextKind::DepthRange)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Parameter("steps must be >= 1".into()));
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::Parameter(format!(
                "step_size must be positive, got {}",
                self.step_size
            )));
        }
        if let Init::NoisyGt { sigma } = self.init {
            if !(sigma.is_finite() && sigma >= 0.0) {
                return Err(Error::Parameter(format!(
                    "init noise must be >= 0, got {sigma}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub final_loss: f64,
    /// AbsRel after scale/shift alignment over the whole map; NaN if the fitted
    /// map is constant.
    pub global_absrel: f64,
    /// AbsRel after aligning and scoring on the foreground region only.
    pub foreground_local_absrel: f64,
    /// Loss before the first step and after every step (`steps + 1` values).
    pub loss_trajectory: Vec<f64>,
}

/// Halvings tried per step before the step is abandoned.
const MAX_HALVINGS: usize = 60;

fn initial_prediction(gt: &DepthMap, cfg: &FitConfig) -> Result<DepthMap> {
    let valid: Vec<f64> = gt.valid_indices().iter().map(|&i| gt.values()[i]).collect();
    if valid.is_empty() {
        return Err(Error::EmptyInput("ground truth has no valid pixels"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let values = match cfg.init {
        Init::Constant => vec![normalization::median(&valid)?; gt.len()],
        Init::NoisyGt { sigma } => {
            let noise = Normal::new(0.0, sigma).map_err(|e| Error::Parameter(format!("{e}")))?;
            gt.values()
                .iter()
                .zip(gt.valid())
                .map(|(&v, &ok)| if ok { v + noise.sample(&mut rng) } else { 0.0 })
                .collect()
        }
        Init::Random => {
            let lo = valid.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = valid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (0..gt.len())
                .map(|_| {
                    if hi > lo {
                        rng.random_range(lo..hi)
                    } else {
                        lo
                    }
                })
                .collect()
        }
    };
    DepthMap::new(gt.height(), gt.width(), values, gt.valid().to_vec())
}

/// AbsRel after alignment; NaN when the prediction is constant over the
/// scored pixels and cannot be aligned.
fn aligned_absrel(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    match metrics::evaluate(pred, gt, true) {
        Ok(r) => Ok(r.absrel),
        Err(Error::DegenerateAlignment) => Ok(f64::NAN),
        Err(e) => Err(e),
    }
}

/// Fits a prediction to `gt` by gradient descent with step halving on loss
/// increase, so the trajectory never goes up. Contexts are built once.
/// `region` selects the pixels for `foreground_local_absrel`; without it the
/// whole map is used.
pub fn fit_depth(
    gt: &DepthMap,
    cfg: &FitConfig,
    region: Option<&[bool]>,
) -> Result<(DepthMap, FitReport)> {
    cfg.validate()?;
    let loss = PreparedLoss::new(cfg.loss.clone(), gt, gt.valid(), cfg.eps, cfg.min_context)?;
    let mut pred = initial_prediction(gt, cfg)?;
    let mut current = loss.evaluate(&pred, gt, true)?;
    if !current.value.is_finite() {
        return Err(Error::Divergence { step: 0 });
    }
    let mut trajectory = Vec::with_capacity(cfg.steps + 1);
    trajectory.push(current.value);
    for t in 1..=cfg.steps {
        let mut step = cfg.step_size;
        let grad = current.gradient.as_deref().expect("gradient requested");
        for _ in 0..MAX_HALVINGS {
            let moved: Vec<f64> = pred
                .values()
                .iter()
                .zip(grad)
                .map(|(v, g)| v - step * g)
                .collect();
            if moved.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { step: t });
            }
            let candidate = pred.with_values(moved)?;
            let report = loss.evaluate(&candidate, gt, true)?;
            if !report.value.is_finite() {
                return Err(Error::Divergence { step: t });
            }
            if report.value <= current.value {
                pred = candidate;
                current = report;
                break;
            }
            step *= 0.5;
        }
        trajectory.push(current.value);
    }

    let global = aligned_absrel(&pred, gt)?;
    let local = match region {
        Some(mask) => {
            if mask.len() != gt.len() {
                return Err(Error::Parameter(
                    "region mask size differs from the map".into(),
                ));
            }
            let joint: Vec<bool> = mask.iter().zip(gt.valid()).map(|(&a, &b)| a && b).collect();
            aligned_absrel(&pred.with_mask(joint.clone())?, &gt.with_mask(joint)?)?
        }
        None => global,
    };
    Ok((
        pred,
        FitReport {
            final_loss: current.value,
            global_absrel: global,
            foreground_local_absrel: local,
            loss_trajectory: trajectory,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub label: String,
    pub report: FitReport,
    /// Relative change of `global_absrel` versus the first row, in percent.
    pub global_change_pct: f64,
    /// Relative change of `foreground_local_absrel` versus the first row, in percent.
    pub local_change_pct: f64,
}

fn pct_change(value: f64, baseline: f64) -> f64 {
    if baseline == 0.0 {
        if value == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        100.0 * (value - baseline) / baseline
    }
}

/// Fits the scene's ground truth once per config. The first config is the
/// baseline for the relative-change columns.
pub fn compare_losses(spec: &SceneSpec, configs: &[FitConfig]) -> Result<Vec<ComparisonRow>> {
    if configs.is_empty() {
        return Err(Error::EmptyInput("no configurations to compare"));
    }
    let gt = generate_scene(spec)?;
    let region = spec.foreground_mask();
    let mut rows: Vec<ComparisonRow> = Vec::with_capacity(configs.len());
    for cfg in configs {
        let (_, report) = fit_depth(&gt, cfg, Some(&region))?;
        rows.push(ComparisonRow {
            label: cfg.loss.label(),
            report,
            global_change_pct: 0.0,
            local_change_pct: 0.0,
        });
    }
    let base_global = rows[0].report.global_absrel;
    let base_local = rows[0].report.foreground_local_absrel;
    for row in &mut rows {
        row.global_change_pct = pct_change(row.report.global_absrel, base_global);
        row.local_change_pct = pct_change(row.report.foreground_local_absrel, base_local);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SceneSpec {
        SceneSpec {
            height: 16,
            width: 16,
            foreground: Rect {
                top: 4,
                bottom: 12,
                left: 4,
                right: 12,
            },
            ..SceneSpec::standard()
        }
    }

    #[test]
    fn two_plane_scene() {
        let spec = SceneSpec {
            ridge_amplitude: 0.0,
            ..small_spec()
        };
        let m = generate_scene(&spec).unwrap();
        let mut distinct: Vec<f64> = m.values().to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        assert_eq!(distinct, vec![1.0, 10.0]);
    }

    #[test]
    fn scene_is_deterministic_and_bounded() {
        let spec = SceneSpec {
            noise_sigma: 0.01,
            ..small_spec()
        };
        assert_eq!(
            generate_scene(&spec).unwrap(),
            generate_scene(&spec).unwrap()
        );
        let clean = generate_scene(&small_spec()).unwrap();
        let fg: Vec<f64> = (0..clean.len())
            .filter(|&i| spec.foreground.contains(i / 16, i % 16))
            .map(|i| clean.values()[i])
            .collect();
        let max = fg.iter().copied().fold(f64::MIN, f64::max);
        let min = fg.iter().copied().fold(f64::MAX, f64::min);
        // columns 4..12 with period 8 hit sin = +1 at col 10 and -1 at col 6
        assert!((max - 1.2).abs() < 1e-12);
        assert!((min - 0.8).abs() < 1e-12);
    }

    #[test]
    fn invalid_specs() {
        let mut s = small_spec();
        s.base_depth = 9.9;
        assert!(generate_scene(&s).is_err());
        let mut s = small_spec();
        s.foreground.bottom = 17;
        assert!(generate_scene(&s).is_err());
        let mut s = small_spec();
        s.noise_sigma = -1.0;
        assert!(generate_scene(&s).is_err());
    }

    #[test]
    fn fit_from_ground_truth_stays_put() {
        let gt = generate_scene(&small_spec()).unwrap();
        let cfg = FitConfig::new(LossKind::Ssi, 5, 10.0, Init::NoisyGt { sigma: 0.0 }, 1);
        let (fitted, report) = fit_depth(&gt, &cfg, None).unwrap();
        assert_eq!(report.loss_trajectory.len(), 6);
        assert!(report.loss_trajectory.iter().all(|&l| l < 1e-12));
        assert_eq!(fitted, gt);
    }

    #[test]
    fn fit_rejects_bad_config() {
        let gt = generate_scene(&small_spec()).unwrap();
        let cfg = FitConfig::new(LossKind::Ssi, 0, 1.0, Init::Random, 1);
        assert!(fit_depth(&gt, &cfg, None).is_err());
        let cfg = FitConfig::new(LossKind::Ssi, 1, 0.0, Init::Random, 1);
        assert!(fit_depth(&gt, &cfg, None).is_err());
    }

    #[test]
    fn trajectory_is_non_increasing() {
        let gt = generate_scene(&small_spec()).unwrap();
        for init in [Init::Random, Init::Constant, Init::NoisyGt { sigma: 0.5 }] {
            let cfg = FitConfig::new(
                LossKind::Hdn(LevelSpec::hdn_depth(ContextKind::DepthRange)),
                30,
                500.0,
                init,
                3,
            );
            let (_, report) = fit_depth(&gt, &cfg, None).unwrap();
            assert_eq!(report.loss_trajectory.len(), 31);
            for w in report.loss_trajectory.windows(2) {
                assert!(w[1] <= w[0] && w[1].is_finite());
            }
            assert!(report.final_loss < report.loss_trajectory[0]);
        }
    }

    #[test]
    fn compare_single_and_duplicate() {
        let spec = small_spec();
        let cfg = FitConfig::new(LossKind::Ssi, 10, 500.0, Init::Random, 5);
        let rows = compare_losses(&spec, core::slice::from_ref(&cfg)).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].global_change_pct, 0.0);
        assert_eq!(rows[0].local_change_pct, 0.0);
        let rows = compare_losses(&spec, &[cfg.clone(), cfg]).unwrap();
        assert_eq!(rows[0], rows[1]);
        assert!(compare_losses(&spec, &[]).is_err());
    }
}
