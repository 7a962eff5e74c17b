mod oracle;

use hdn_core::gradcheck::check_gradient;
use hdn_core::loss::{LossKind, PreparedLoss};
use hdn_core::{ContextKind, DepthMap, LevelSpec};

const STEP: f64 = 1e-5;
const TIE_MARGIN: f64 = 1e-4;
const TOLERANCE: f64 = 1e-4;

fn kinds() -> Vec<LossKind> {
    vec![
        LossKind::Ssi,
        LossKind::Hdn(LevelSpec::hdn_spatial()),
        LossKind::Hdn(LevelSpec::hdn_depth(ContextKind::DepthPercentile)),
        LossKind::Hdn(LevelSpec::hdn_depth(ContextKind::DepthRange)),
        LossKind::L1PlusHdn {
            levels: LevelSpec::hdn_depth(ContextKind::DepthRange),
            lambda: 1.0,
        },
    ]
}

fn prepared(kind: &LossKind, pred: &DepthMap, gt: &DepthMap) -> PreparedLoss {
    PreparedLoss::new(
        kind.clone(),
        gt,
        &pred.joint_mask(gt).unwrap(),
        oracle::EPS,
        2,
    )
    .unwrap()
}

#[test]
fn analytic_matches_finite_differences_on_random_6x6() {
    let mut rng = oracle::rng(42);
    for kind in kinds() {
        let (mut total_checked, mut total_valid) = (0, 0);
        for case in 0..20 {
            let gt = oracle::random_map(&mut rng, 6, 6, 0.5, 10.0, 0.9, 4);
            let pred = oracle::random_map(&mut rng, 6, 6, 0.5, 10.0, 0.9, 4);
            let loss = prepared(&kind, &pred, &gt);
            let r = check_gradient(&loss, &pred, &gt, STEP, TIE_MARGIN).unwrap();
            assert!(r.passes(TOLERANCE), "{} case {case}: {r:?}", kind.label());
            total_checked += r.checked;
            total_valid += r.checked + r.skipped;
        }
        assert!(
            4 * total_checked >= total_valid,
            "{}: only {total_checked} of {total_valid} pixels checked",
            kind.label()
        );
    }
}

#[test]
fn gradient_vanishes_at_affine_minimum() {
    let mut rng = oracle::rng(8);
    for kind in kinds()
        .into_iter()
        .filter(|k| !matches!(k, LossKind::L1PlusHdn { .. }))
    {
        let gt = oracle::random_map(&mut rng, 6, 6, 0.5, 10.0, 1.0, 0);
        let pred = gt.affine(2.5, -4.0).unwrap();
        let loss = prepared(&kind, &pred, &gt);
        let g = loss.evaluate(&pred, &gt, true).unwrap().gradient.unwrap();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-9, "{}: {norm}", kind.label());
    }
}

#[test]
fn gradient_is_zero_at_invalid_pixels() {
    let mut rng = oracle::rng(21);
    for kind in kinds() {
        let gt = oracle::random_map(&mut rng, 5, 5, 0.5, 10.0, 0.7, 4);
        let pred = oracle::random_map(&mut rng, 5, 5, 0.5, 10.0, 0.7, 4);
        let g = prepared(&kind, &pred, &gt)
            .evaluate(&pred, &gt, true)
            .unwrap()
            .gradient
            .unwrap();
        let joint = pred.joint_mask(&gt).unwrap();
        for i in (0..g.len()).filter(|&i| !joint[i]) {
            assert_eq!(g[i], 0.0);
        }
    }
}

#[test]
fn clamped_constant_prediction_has_finite_gradient() {
    let gt = DepthMap::from_values(2, 3, vec![1.0, 2.0, 4.0, 3.0, 6.0, 5.0]).unwrap();
    let pred = DepthMap::from_values(2, 3, vec![2.0; 6]).unwrap();
    let loss = prepared(&LossKind::Hdn(LevelSpec::hdn_spatial()), &pred, &gt);
    let r = loss.evaluate(&pred, &gt, true).unwrap();
    assert!(r.gradient.unwrap().iter().all(|g| g.is_finite()));
}
