//! Harness configuration: `key = value` text, one option per line, `#`
//! starts a comment. The same keys are accepted on the command line as
//! `--set key=value`.
//!
//! Scene keys: `height`, `width`, `background_depth`, `fg_top`,
//! `fg_bottom`, `fg_left`, `fg_right`, `base_depth`, `ridge_amplitude`,
//! `ridge_period`, `noise_sigma`, `seed`.
//!
//! Fit keys: `loss` (repeatable, `<kind>[:<levels>]`), `levels`, `lambda`,
//! `steps`, `step_size`, `init` (`constant`, `random` or `noisy_gt:<sigma>`),
//! `fit_seed`, `eps`, `min_context`.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use hdn_core::harness::{FitConfig, Init, SceneSpec};
use hdn_core::loss::LossKind;
use hdn_core::{ContextKind, LevelSpec};

use crate::error::{Error, Result};

/// Parses `1,2,4`.
pub fn parse_levels(text: &str) -> std::result::Result<Vec<usize>, String> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad level size '{}'", t.trim()))
        })
        .collect()
}

fn default_sizes(kind: ContextKind) -> Vec<usize> {
    match kind {
        ContextKind::Spatial => LevelSpec::hdn_spatial().sizes().to_vec(),
        k => LevelSpec::hdn_depth(k).sizes().to_vec(),
    }
}

/// Builds a loss from a kind name (`ssi`, `hdn_s`, `hdn_dp`, `hdn_dr`),
/// optional level sizes and an optional L1 weight. Hierarchical kinds
/// default to `{1,2,4,8}` (spatial) or `{1,2,4}` (depth bins).
pub fn loss_kind(
    kind: &str,
    levels: Option<&[usize]>,
    lambda: Option<f64>,
) -> std::result::Result<LossKind, String> {
    if kind == "ssi" {
        if levels.is_some() {
            return Err("--levels does not apply to ssi".into());
        }
        if lambda.is_some() {
            return Err("--lambda applies only to hdn kinds".into());
        }
        return Ok(LossKind::Ssi);
    }
    let ctx = match kind {
        "hdn_s" => ContextKind::Spatial,
        "hdn_dp" => ContextKind::DepthPercentile,
        "hdn_dr" => ContextKind::DepthRange,
        other => {
            return Err(format!(
                "unknown loss kind '{other}' (expected ssi, hdn_s, hdn_dp or hdn_dr)"
            ))
        }
    };
    let sizes = levels
        .map(<[usize]>::to_vec)
        .unwrap_or_else(|| default_sizes(ctx));
    let spec = LevelSpec::new(ctx, sizes).map_err(|e| e.to_string())?;
    match lambda {
        None => Ok(LossKind::Hdn(spec)),
        Some(l) if l >= 0.0 && l.is_finite() => Ok(LossKind::L1PlusHdn {
            levels: spec,
            lambda: l,
        }),
        Some(l) => Err(format!("lambda must be >= 0, got {l}")),
    }
}

/// Parses `<kind>[:<levels>]`, e.g. `ssi` or `hdn_dr:1,2,4`.
pub fn parse_loss_spec(text: &str, lambda: Option<f64>) -> std::result::Result<LossKind, String> {
    let (kind, levels) = match text.split_once(':') {
        Some((k, l)) => (k.trim(), Some(parse_levels(l)?)),
        None => (text.trim(), None),
    };
    loss_kind(
        kind,
        levels.as_deref(),
        if kind == "ssi" { None } else { lambda },
    )
}

pub fn parse_init(text: &str) -> std::result::Result<Init, String> {
    match text {
        "constant" => Ok(Init::Constant),
        "random" => Ok(Init::Random),
        _ => match text.strip_prefix("noisy_gt:") {
            Some(sigma) => sigma
                .parse()
                .map(|sigma| Init::NoisyGt { sigma })
                .map_err(|_| format!("bad noise level '{sigma}'")),
            None => Err(format!(
                "unknown init '{text}' (expected constant, random or noisy_gt:<sigma>)"
            )),
        },
    }
}

/// A scene plus the fits to run on it.
#[derive(Debug, Clone, PartialEq)]
pub struct HarnessConfig {
    pub scene: SceneSpec,
    /// Loss specs in order of appearance; empty means "use the command's default".
    pub losses: Vec<String>,
    pub levels: Option<Vec<usize>>,
    pub lambda: Option<f64>,
    pub steps: usize,
    pub step_size: f64,
    pub init: Init,
    pub fit_seed: u64,
    pub eps: f64,
    pub min_context: usize,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        let fit = FitConfig::standard(LossKind::Ssi);
        Self {
            scene: SceneSpec::standard(),
            losses: Vec::new(),
            levels: None,
            lambda: None,
            steps: fit.steps,
            step_size: fit.step_size,
            init: fit.init,
            fit_seed: fit.seed,
            eps: fit.eps,
            min_context: fit.min_context,
        }
    }
}

fn num<T: FromStr>(value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("cannot parse '{value}'"))
}

impl HarnessConfig {
    /// Applies one `key = value` option.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let s = &mut self.scene;
        match key {
            "height" => s.height = num(value)?,
            "width" => s.width = num(value)?,
            "background_depth" => s.background_depth = num(value)?,
            "fg_top" => s.foreground.top = num(value)?,
            "fg_bottom" => s.foreground.bottom = num(value)?,
            "fg_left" => s.foreground.left = num(value)?,
            "fg_right" => s.foreground.right = num(value)?,
            "base_depth" => s.base_depth = num(value)?,
            "ridge_amplitude" => s.ridge_amplitude = num(value)?,
            "ridge_period" => s.ridge_period = num(value)?,
            "noise_sigma" => s.noise_sigma = num(value)?,
            "seed" => s.seed = num(value)?,
            "loss" => {
                parse_loss_spec(value, None)?;
                self.losses.push(value.to_string());
            }
            "levels" => self.levels = Some(parse_levels(value)?),
            "lambda" => self.lambda = Some(num(value)?),
            "steps" => self.steps = num(value)?,
            "step_size" => self.step_size = num(value)?,
            "init" => self.init = parse_init(value)?,
            "fit_seed" => self.fit_seed = num(value)?,
            "eps" => self.eps = num(value)?,
            "min_context" => self.min_context = num(value)?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// Applies `key=value` (whitespace around `=` allowed).
    pub fn set_pair(&mut self, pair: &str) -> std::result::Result<(), String> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got '{pair}'"))?;
        self.set(k.trim(), v.trim())
    }

    /// Parses config text on top of the defaults. `path` labels errors.
    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            cfg.set_pair(line).map_err(|detail| Error::Config {
                path: path.to_path_buf(),
                line: n + 1,
                detail,
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: PathBuf::from(path),
            source,
        })?;
        Self::parse(path, &text)
    }

    /// One fit configuration per loss spec, sharing the step/init settings.
    /// A spec without inline levels uses the `levels` key, then the defaults.
    pub fn fit_configs(&self, default_losses: &[&str]) -> Result<Vec<FitConfig>> {
        let specs: Vec<&str> = if self.losses.is_empty() {
            default_losses.to_vec()
        } else {
            self.losses.iter().map(String::as_str).collect()
        };
        specs
            .into_iter()
            .map(|spec| {
                let loss = match (spec.contains(':'), &self.levels) {
                    (false, Some(levels)) if spec != "ssi" => {
                        loss_kind(spec, Some(levels), self.lambda)
                    }
                    _ => parse_loss_spec(spec, self.lambda),
                }
                .map_err(Error::Usage)?;
                let mut fit =
                    FitConfig::new(loss, self.steps, self.step_size, self.init, self.fit_seed);
                fit.eps = self.eps;
                fit.min_context = self.min_context;
                fit.validate()?;
                Ok(fit)
            })
            .collect()
    }
}
