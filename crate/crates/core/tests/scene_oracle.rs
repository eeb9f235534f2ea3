//! End-to-end checks against the independent plane-rendering oracle:
//! warping accuracy on exact scenes, masked-loss behavior around moving
//! content, pose recovery, and moving-mask synthesis.

mod common;

use common::{pose_error, random_small_pose, PlaneScene};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tempeo_core::ddvo::{refine_pose, SolverConfig};
use tempeo_core::geometry::{Pose, Twist};
use tempeo_core::imagery::{FlowField, Image, ScalarMap, Units};
use tempeo_core::losses::robust_temporal_loss;
use tempeo_core::movemask::{make_moving_mask, residual_flow, static_weight};
use tempeo_core::warp::inverse_warp;

fn deg(d: f64) -> f64 {
    d * std::f64::consts::PI / 180.0
}

#[test]
fn oracle_is_self_consistent() {
    // Rendering frame t+1 at the exact correspondence of a frame-t pixel
    // reproduces the frame-t intensity: both paths evaluate the same
    // world point.
    let pose = Twist::new(Vector3::new(0.01, -0.02, 0.015), Vector3::new(0.1, -0.05, 0.04)).exp();
    let scene = PlaneScene::standard(192, 144, pose, 0.3);
    let flow = scene.gt_flow();
    for (u, v) in [(10usize, 10usize), (80, 60), (140, 100), (33, 87)] {
        let (du, dv) = flow.get(u, v);
        let from_t = scene.render_t_at(u as f64, v as f64);
        let from_t1 = scene.render_t1_at(u as f64 + du, v as f64 + dv);
        assert!(
            (from_t - from_t1).abs() < 1e-10,
            "oracle mismatch at ({u},{v}): {from_t} vs {from_t1}"
        );
    }
}

#[test]
fn inverse_warp_reconstructs_static_scene() {
    // Warping frame t+1 through the true depth and pose matches frame t
    // within bilinear interpolation error on the smooth oracle scene.
    let pose = Twist::new(Vector3::new(0.012, 0.02, -0.008), Vector3::new(-0.12, 0.06, 0.1)).exp();
    let scene = PlaneScene::standard(192, 144, pose, 1.1);
    let frame_t = scene.render_t();
    let frame_t1 = scene.render_t1();
    let depth = scene.depth_t();
    let (warped, valid) = inverse_warp(&frame_t1, &depth, &scene.pose, &scene.k).unwrap();
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in 0..144 {
        for u in 0..192 {
            if valid.data()[v * 192 + u] == 1.0 {
                sum += (warped.get(u, v, 0) - frame_t.get(u, v, 0)).abs();
                n += 1;
            }
        }
    }
    assert!(n > 170 * 120);
    let mean = sum / n as f64;
    assert!(mean < 0.01, "mean reconstruction error {mean}");
}

#[test]
fn rtc_near_zero_on_static_scene_and_reduced_by_masking() {
    let pose = Twist::new(Vector3::new(0.0, 0.015, 0.005), Vector3::new(0.08, -0.04, 0.06)).exp();
    let scene = PlaneScene::standard(192, 144, pose, 2.0);
    let frame_t = scene.render_t();
    let frame_t1 = scene.render_t1();
    let depth = scene.depth_t();
    let ones = ScalarMap::filled(192, 144, Units::Probability, 1.0);

    let clean = robust_temporal_loss(
        &frame_t, &frame_t1, &depth, &scene.pose, &ones, &ones, &scene.k,
    )
    .unwrap();
    assert!(clean.value < 1e-4, "static-scene loss {}", clean.value);

    // Corrupt ~10% of frame t+1 with an independently moving patch.
    let (corrupted_t1, weights_t) = corrupt_with_mover(&scene, &frame_t1);
    let unmasked = robust_temporal_loss(
        &frame_t, &corrupted_t1, &depth, &scene.pose, &ones, &ones, &scene.k,
    )
    .unwrap();
    let masked = robust_temporal_loss(
        &frame_t, &corrupted_t1, &depth, &scene.pose, &weights_t, &ones, &scene.k,
    )
    .unwrap();
    assert!(
        masked.value < unmasked.value,
        "masked {} vs unmasked {}",
        masked.value,
        unmasked.value
    );
    assert!(masked.value < 1e-4, "masked loss {}", masked.value);
}

/// Paints a fake mover over a rectangle of frame t+1 (roughly 10% of the
/// image) and returns the corrupted frame plus the frame-t static
/// weights that exclude pixels landing on it.
fn corrupt_with_mover(scene: &PlaneScene, frame_t1: &Image) -> (Image, ScalarMap) {
    let (w, h) = (scene.width, scene.height);
    let (u0, u1) = ((w as f64 * 0.55) as usize, (w as f64 * 0.88) as usize);
    let (v0, v1) = ((h as f64 * 0.50) as usize, (h as f64 * 0.80) as usize);
    let mover = |u: f64, v: f64| {
        (0.5 + 0.35 * (0.37 * u + 1.0).sin() + 0.3 * (0.29 * v - 0.4).cos()).clamp(0.0, 1.0)
    };
    let corrupted = Image::from_fn(w, h, |u, v| {
        if (u0..u1).contains(&u) && (v0..v1).contains(&v) {
            mover(u as f64, v as f64)
        } else {
            frame_t1.get(u, v, 0)
        }
    })
    .unwrap();
    let flow = scene.gt_flow();
    let margin = 2.0;
    let weights = ScalarMap::from_fn(w, h, Units::Probability, |u, v| {
        let (du, dv) = flow.get(u, v);
        let (su, sv) = (u as f64 + du, v as f64 + dv);
        let hit = su >= u0 as f64 - margin
            && su <= u1 as f64 + margin
            && sv >= v0 as f64 - margin
            && sv <= v1 as f64 + margin;
        Some(if hit { 0.0 } else { 1.0 })
    });
    (corrupted, weights)
}

#[test]
fn pose_recovery_on_oracle_scene() {
    // The per-operation example: 0.5 degrees about y plus 5 cm of
    // translation, solved from identity.
    let truth = Twist::new(
        Vector3::new(0.0, deg(0.5), 0.0),
        Vector3::new(0.05, 0.0, 0.0),
    )
    .exp();
    let scene = PlaneScene::standard(192, 144, truth, 0.7);
    let ones = ScalarMap::filled(192, 144, Units::Probability, 1.0);
    let (estimate, trace) = refine_pose(
        &scene.render_t(),
        &scene.render_t1(),
        &scene.depth_t(),
        &Pose::identity(),
        &ones,
        &scene.k,
        &SolverConfig::default(),
    )
    .unwrap();
    let err = pose_error(&estimate, &truth);
    assert!(err < 1e-3, "pose error {err} (trace: {:?})", trace.termination);
}

#[test]
fn masked_solve_beats_unmasked_on_corrupted_scene() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let truth = random_small_pose(&mut rng, deg(1.5), 0.15);
    let scene = PlaneScene::standard(192, 144, truth, 1.9);
    let frame_t = scene.render_t();
    let (corrupted_t1, weights) = corrupt_with_mover(&scene, &scene.render_t1());
    let depth = scene.depth_t();
    let ones = ScalarMap::filled(192, 144, Units::Probability, 1.0);
    let cfg = SolverConfig::default();

    let (masked, _) = refine_pose(
        &frame_t, &corrupted_t1, &depth, &Pose::identity(), &weights, &scene.k, &cfg,
    )
    .unwrap();
    let (unmasked, _) = refine_pose(
        &frame_t, &corrupted_t1, &depth, &Pose::identity(), &ones, &scene.k, &cfg,
    )
    .unwrap();
    let e_masked = pose_error(&masked, &truth);
    let e_unmasked = pose_error(&unmasked, &truth);
    assert!(
        e_masked < e_unmasked,
        "masked {e_masked} vs unmasked {e_unmasked}"
    );
}

#[test]
fn pose_recovery_is_equivariant_under_conjugation() {
    let truth = Twist::new(
        Vector3::new(0.008, -0.015, 0.01),
        Vector3::new(0.1, 0.05, -0.08),
    )
    .exp();
    let scene = PlaneScene::standard(192, 144, truth, 0.4);
    let q = Twist::new(
        Vector3::new(0.02, 0.03, -0.01),
        Vector3::new(0.3, -0.2, 0.15),
    )
    .exp();
    let conjugated = scene.conjugated(&q);

    let ones = ScalarMap::filled(192, 144, Units::Probability, 1.0);
    let cfg = SolverConfig::default();
    let solve = |s: &PlaneScene| {
        refine_pose(
            &s.render_t(),
            &s.render_t1(),
            &s.depth_t(),
            &Pose::identity(),
            &ones,
            &s.k,
            &cfg,
        )
        .unwrap()
        .0
    };
    let est = solve(&scene);
    let est_conj = solve(&conjugated);

    // Both solves hit their own ground truth, and the two ground truths
    // are exact conjugates, so the estimates must be conjugates too.
    assert!(pose_error(&est, &truth) < 1e-3);
    assert!(pose_error(&est_conj, &conjugated.pose) < 1e-3);
    let expected = q.inverse().compose(&est).compose(&q);
    let discrepancy = pose_error(&est_conj, &expected);
    assert!(discrepancy < 2e-3, "conjugation discrepancy {discrepancy}");
}

#[test]
fn moving_mask_from_oracle_scene_matches_object_exactly() {
    // Static background with exact rigid flow; a rectangular object
    // carries extra flow well above the threshold.
    let pose = Twist::new(Vector3::new(0.0, 0.01, 0.0), Vector3::new(-0.1, 0.02, 0.05)).exp();
    let scene = PlaneScene::standard(96, 72, pose, 0.0);
    let depth = scene.depth_t();
    let rigid = scene.gt_flow();
    let in_object = |u: usize, v: usize| (30..54).contains(&u) && (20..44).contains(&v);
    let mut du = rigid.du().to_vec();
    let mut dv = rigid.dv().to_vec();
    for v in 0..72 {
        for u in 0..96 {
            if in_object(u, v) {
                du[v * 96 + u] += 3.0;
                dv[v * 96 + u] -= 2.0;
            }
        }
    }
    let gt_flow = FlowField::new(96, 72, du, dv).unwrap();
    let residual = residual_flow(&gt_flow, &depth, &scene.pose, &scene.k).unwrap();
    let mask = make_moving_mask(&residual, None, 1.0, 0.5).unwrap();

    // IoU against the analytic object mask must be exactly 1.
    let mut inter = 0usize;
    let mut union = 0usize;
    for v in 0..72 {
        for u in 0..96 {
            let predicted = mask.get(u, v) == Some(1.0);
            let actual = in_object(u, v);
            if predicted && actual {
                inter += 1;
            }
            if predicted || actual {
                union += 1;
            }
        }
    }
    assert_eq!(inter, union, "IoU must be exactly 1");
    assert!(union > 0);

    // And the static weights feed straight into the loss support.
    let weights = static_weight(&mask);
    assert_eq!(
        weights.data().iter().filter(|&&w| w == 0.0).count(),
        24 * 24
    );
}
