use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use hdn::config::{self, HarnessConfig};
use hdn::{io, report, Error, Result};
use hdn_core::harness;
use hdn_core::loss::{LossKind, PreparedLoss, DEFAULT_MIN_CONTEXT};
use hdn_core::normalization::DEFAULT_EPS;
use hdn_core::{contexts, gradcheck, metrics, ContextKind, DepthMap};

/// Hierarchical depth normalization: losses, partitions, metrics and
/// desk-scale fitting experiments.
#[derive(Parser)]
#[command(name = "hdn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a loss between a prediction and a ground truth.
    Loss(LossArgs),
    /// Compare the analytical gradient with central finite differences.
    GradCheck(GradCheckArgs),
    /// Print the contexts of one partition level built on a ground truth.
    Partition(PartitionArgs),
    /// AbsRel and δ1, optionally after least-squares scale/shift alignment.
    Eval(EvalArgs),
    /// Sample (pred, gt) pairs as CSV.
    Scatter(ScatterArgs),
    /// Generate a synthetic ground-truth scene and print its SHA-256.
    Synth(SynthArgs),
    /// Fit a depth map to a ground truth by gradient descent on a loss.
    Fit(FitArgs),
    /// Fit the synthetic scene under several losses and tabulate the results.
    Compare(CompareArgs),
}

#[derive(Args)]
struct Pair {
    /// Prediction (.pfm or .csv).
    pred: PathBuf,
    /// Ground truth (.pfm or .csv).
    gt: PathBuf,
    /// PGM validity mask for the prediction.
    #[arg(long)]
    pred_mask: Option<PathBuf>,
    /// PGM validity mask for the ground truth.
    #[arg(long)]
    gt_mask: Option<PathBuf>,
}

impl Pair {
    fn load(&self) -> Result<(DepthMap, DepthMap)> {
        let pred = io::read_map(&self.pred, self.pred_mask.as_deref())?;
        let gt = io::read_map(&self.gt, self.gt_mask.as_deref())?;
        pred.joint_mask(&gt)?;
        Ok((pred, gt))
    }
}

#[derive(Args)]
struct LossSelect {
    /// ssi, hdn_s, hdn_dp or hdn_dr.
    #[arg(long, default_value = "ssi")]
    kind: String,
    /// Comma-separated level sizes, e.g. 1,2,4.
    #[arg(long)]
    levels: Option<String>,
    /// Weight of the hierarchical term added to a plain L1 loss.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
    /// Smallest usable context size.
    #[arg(long, default_value_t = DEFAULT_MIN_CONTEXT)]
    min_context: usize,
}

impl LossSelect {
    fn prepare(&self, pred: &DepthMap, gt: &DepthMap) -> Result<PreparedLoss> {
        let levels = match &self.levels {
            Some(text) => Some(config::parse_levels(text).map_err(Error::Usage)?),
            None => None,
        };
        let kind: LossKind =
            config::loss_kind(&self.kind, levels.as_deref(), self.lambda).map_err(Error::Usage)?;
        let mask = pred.joint_mask(gt)?;
        Ok(PreparedLoss::new(
            kind,
            gt,
            &mask,
            self.eps,
            self.min_context,
        )?)
    }
}

#[derive(Args)]
struct LossArgs {
    #[command(flatten)]
    pair: Pair,
    #[command(flatten)]
    loss: LossSelect,
}

#[derive(Args)]
struct GradCheckArgs {
    #[command(flatten)]
    pair: Pair,
    #[command(flatten)]
    loss: LossSelect,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    /// Pixels closer than this to a kink of the loss are not checked.
    #[arg(long, default_value_t = 1e-4)]
    tie_margin: f64,
}

#[derive(Args)]
struct PartitionArgs {
    /// Ground truth the contexts are built on.
    gt: PathBuf,
    #[arg(long)]
    gt_mask: Option<PathBuf>,
    /// global, spatial, depth_percentile (dp) or depth_range (dr).
    #[arg(long)]
    kind: String,
    /// Grid or bin count.
    #[arg(long, default_value_t = 1)]
    s: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    pair: Pair,
    /// Fit scale and shift by least squares before scoring.
    #[arg(long)]
    align: bool,
}

#[derive(Args)]
struct ScatterArgs {
    #[command(flatten)]
    pair: Pair,
    /// Number of pairs to sample.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HarnessArgs {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable), e.g. --set noise_sigma=0.01.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl HarnessArgs {
    fn load(&self) -> Result<HarnessConfig> {
        let mut cfg = match &self.config {
            Some(path) => HarnessConfig::load(path)?,
            None => HarnessConfig::default(),
        };
        for pair in &self.set {
            cfg.set_pair(pair)
                .map_err(|e| Error::Usage(format!("--set {pair}: {e}")))?;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    harness: HarnessArgs,
    /// Output map (.pfm or .csv).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    harness: HarnessArgs,
    /// Ground truth to fit; the configured synthetic scene when absent.
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    gt_mask: Option<PathBuf>,
    /// Loss as `<kind>[:<levels>]`, e.g. hdn_dr:1,2,4.
    #[arg(long)]
    loss: Option<String>,
    /// Write the fitted map here (.pfm or .csv).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the per-step loss as CSV here.
    #[arg(long)]
    trajectory: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    harness: HarnessArgs,
    /// Loss as `<kind>[:<levels>]` (repeatable); the first is the baseline.
    #[arg(long)]
    loss: Vec<String>,
    /// Print CSV instead of the aligned table.
    #[arg(long)]
    csv: bool,
}

/// Outcome of a command that ran to completion.
enum Outcome {
    Ok,
    CheckFailed,
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Loss(a) => {
            let (pred, gt) = a.pair.load()?;
            let loss = a.loss.prepare(&pred, &gt)?;
            print!(
                "{}",
                report::loss_report(&loss.evaluate(&pred, &gt, false)?)
            );
        }
        Command::GradCheck(a) => {
            if a.step.is_nan() || a.step <= 0.0 || a.tolerance.is_nan() || a.tolerance <= 0.0 {
                return Err(Error::Usage(
                    "--step and --tolerance must be positive".into(),
                ));
            }
            let (pred, gt) = a.pair.load()?;
            let loss = a.loss.prepare(&pred, &gt)?;
            let r = gradcheck::check_gradient(&loss, &pred, &gt, a.step, a.tie_margin)?;
            let pass = r.passes(a.tolerance);
            println!("max_rel_error: {:e}", r.max_rel_error);
            println!("grad_norm: {:e}", r.grad_norm);
            println!("checked: {}", r.checked);
            println!("skipped: {}", r.skipped);
            println!("tolerance: {:e}", a.tolerance);
            println!("result: {}", if pass { "pass" } else { "fail" });
            if !pass {
                return Ok(Outcome::CheckFailed);
            }
        }
        Command::Partition(a) => {
            let gt = io::read_map(&a.gt, a.gt_mask.as_deref())?;
            let part = if a.kind == "global" {
                contexts::global_context(&gt)?
            } else {
                let kind: ContextKind = a.kind.parse()?;
                contexts::build_level(&gt, kind, a.s)?
            };
            print!("{}", part.dump());
        }
        Command::Eval(a) => {
            let (pred, gt) = a.pair.load()?;
            print!(
                "{}",
                report::eval_report(&metrics::evaluate(&pred, &gt, a.align)?)
            );
        }
        Command::Scatter(a) => {
            let (pred, gt) = a.pair.load()?;
            let csv = report::scatter_csv(&metrics::scatter_sample(&pred, &gt, a.n, a.seed)?);
            match &a.out {
                Some(path) => io::write_atomic(path, csv.as_bytes())?,
                None => print!("{csv}"),
            }
        }
        Command::Synth(a) => {
            let cfg = a.harness.load()?;
            let gt = harness::generate_scene(&cfg.scene)?;
            let bytes = encode_by_extension(&gt, &a.out)?;
            io::write_atomic(&a.out, &bytes)?;
            println!("sha256: {:x}", Sha256::digest(&bytes));
        }
        Command::Fit(a) => {
            let mut cfg = a.harness.load()?;
            if let Some(spec) = &a.loss {
                cfg.losses = vec![spec.clone()];
            }
            let fits = cfg.fit_configs(&["hdn_dr"])?;
            if fits.len() != 1 {
                return Err(Error::Usage(
                    "fit takes exactly one loss; use compare for several".into(),
                ));
            }
            let (gt, region) = match &a.gt {
                Some(path) => (io::read_map(path, a.gt_mask.as_deref())?, None),
                None => (
                    harness::generate_scene(&cfg.scene)?,
                    Some(cfg.scene.foreground_mask()),
                ),
            };
            let fit = &fits[0];
            let (fitted, r) = harness::fit_depth(&gt, fit, region.as_deref())?;
            let map_bytes = match &a.out {
                Some(path) => Some(encode_by_extension(&fitted, path)?),
                None => None,
            };
            if let (Some(path), Some(bytes)) = (&a.out, map_bytes) {
                io::write_atomic(path, &bytes)?;
            }
            if let Some(path) = &a.trajectory {
                io::write_atomic(path, report::trajectory_csv(&r).as_bytes())?;
            }
            print!("{}", report::fit_report(&fit.loss.label(), &r));
        }
        Command::Compare(a) => {
            let mut cfg = a.harness.load()?;
            if !a.loss.is_empty() {
                cfg.losses = a.loss.clone();
            }
            let fits = cfg.fit_configs(&["ssi", "hdn_dr"])?;
            let rows = harness::compare_losses(&cfg.scene, &fits)?;
            if a.csv {
                print!("{}", report::comparison_csv(&rows));
            } else {
                print!("{}", report::comparison_table(&rows));
            }
        }
    }
    Ok(Outcome::Ok)
}

/// Serializes values only; masks are not part of synthetic or fitted output.
fn encode_by_extension(map: &DepthMap, path: &Path) -> Result<Vec<u8>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pfm") => Ok(io::encode_pfm(map)),
        Some("csv") => Ok(io::encode_csv_map(map).into_bytes()),
        _ => Err(Error::Usage(format!(
            "{}: expected a .pfm or .csv output",
            path.display()
        ))),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("hdn: {e}");
            ExitCode::from(2)
        }
    }
}
