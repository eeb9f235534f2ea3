//! Analytic per-pixel gradients of the losses.
//!
//! Each function returns the derivative of the scalar loss with respect
//! to one input raster, evaluated pixel by pixel. These are the exact
//! derivatives of the implemented losses (including their bilinear
//! interpolants), valid wherever the loss is smooth: away from probability
//! clamps, away from absolute-value ties, and at configurations where the
//! valid support does not change under an infinitesimal perturbation.
//!
//! Gradient maps reuse [`ScalarMap`] as a container; the units tag mirrors
//! the differentiated input and validity marks where the derivative is
//! defined (and possibly zero).

use super::{rtc_parts, SegMode, PROB_CLAMP, SSIM_C1, SSIM_C2, SSIM_WINDOW};
use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose};
use crate::imagery::{FlowField, Image, ScalarMap, Units};
use nalgebra::{Matrix2x3, Vector2, Vector3};

fn joint_valid_count(a: &ScalarMap, b: &ScalarMap) -> usize {
    a.validity()
        .iter()
        .zip(b.validity())
        .filter(|(&x, &y)| x && y)
        .count()
}

/// d(depth_l1)/d(pred). The derivative with respect to the ground truth
/// is the negation.
pub fn depth_l1_wrt_pred(pred: &ScalarMap, gt: &ScalarMap) -> Result<ScalarMap> {
    // Reuse the loss for its validation side effects.
    super::depth_l1(pred, gt)?;
    let n = joint_valid_count(pred, gt) as f64;
    Ok(ScalarMap::from_fn(
        pred.width(),
        pred.height(),
        Units::Normalized,
        |u, v| match (pred.get(u, v), gt.get(u, v)) {
            (Some(p), Some(g)) => Some((p - g).signum() / n),
            _ => None,
        },
    ))
}

/// d(moving_seg_loss)/d(pred_prob); zero where the probability clamp
/// saturates.
pub fn moving_seg_wrt_pred(
    pred_prob: &ScalarMap,
    gt_mask: &ScalarMap,
    mode: SegMode,
) -> Result<ScalarMap> {
    super::moving_seg_loss(pred_prob, gt_mask, mode)?;
    let n = joint_valid_count(pred_prob, gt_mask) as f64;
    Ok(ScalarMap::from_fn(
        pred_prob.width(),
        pred_prob.height(),
        Units::Probability,
        |u, v| match (pred_prob.get(u, v), gt_mask.get(u, v)) {
            (Some(p), Some(m)) => {
                if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
                    return Some(0.0);
                }
                let m = m.clamp(0.0, 1.0);
                let d = match mode {
                    SegMode::Full => -m / p + (1.0 - m) / (1.0 - p),
                    SegMode::Literal => -m / p,
                };
                Some(d / n)
            }
            _ => None,
        },
    ))
}

/// d(ssim_loss)/d(first image). Single-channel inputs only.
pub fn ssim_loss_wrt_first(a: &Image, b: &Image) -> Result<ScalarMap> {
    if a.channels() != 1 || b.channels() != 1 {
        return Err(Error::Domain(
            "ssim gradients support single-channel images only".into(),
        ));
    }
    // Validation (dims, minimum size) via the forward pass.
    super::ssim_map(a, b)?;
    let (w, h) = (a.width(), a.height());
    let half = SSIM_WINDOW / 2;
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let centers_u = half..w - half;
    let centers_v = half..h - half;
    let window_count = (centers_u.len() * centers_v.len()) as f64;

    let mut grad = vec![0.0; w * h];
    for cv in centers_v {
        for cu in centers_u.clone() {
            let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for v in cv - half..=cv + half {
                for u in cu - half..=cu + half {
                    let x = a.get(u, v, 0);
                    let y = b.get(u, v, 0);
                    sx += x;
                    sy += y;
                    sxx += x * x;
                    syy += y * y;
                    sxy += x * y;
                }
            }
            let mx = sx / n;
            let my = sy / n;
            let vx = sxx / n - mx * mx;
            let vy = syy / n - my * my;
            let cov = sxy / n - mx * my;
            let a1 = 2.0 * mx * my + SSIM_C1;
            let a2 = 2.0 * cov + SSIM_C2;
            let b1 = mx * mx + my * my + SSIM_C1;
            let b2 = vx + vy + SSIM_C2;
            let denom = b1 * b2;
            for v in cv - half..=cv + half {
                for u in cu - half..=cu + half {
                    let x = a.get(u, v, 0);
                    let y = b.get(u, v, 0);
                    let da1 = 2.0 * my / n;
                    let da2 = 2.0 * (y - my) / n;
                    let db1 = 2.0 * mx / n;
                    let db2 = 2.0 * (x - mx) / n;
                    let ds = (da1 * a2 + a1 * da2) / denom
                        - a1 * a2 * (db1 * b2 + b1 * db2) / (denom * denom);
                    // loss = mean over windows of (1 - ssim) / 2.
                    grad[v * w + u] += -0.5 * ds / window_count;
                }
            }
        }
    }
    ScalarMap::new(w, h, Units::Normalized, grad, vec![true; w * h])
}

/// d(synthetic_temporal_loss)/d(translated_t) and /d(translated_t1).
/// Single-channel inputs only.
pub fn synthetic_temporal_wrt_frames(
    translated_t: &Image,
    translated_t1: &Image,
    gt_flow: &FlowField,
) -> Result<(ScalarMap, ScalarMap)> {
    if translated_t.channels() != 1 || translated_t1.channels() != 1 {
        return Err(Error::Domain(
            "temporal-loss gradients support single-channel images only".into(),
        ));
    }
    super::synthetic_temporal_loss(translated_t, translated_t1, gt_flow)?;
    let (w, h) = (translated_t.width(), translated_t.height());
    let mut n = 0usize;
    let mut samples = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let (du, dv) = gt_flow.get(u, v);
            let s = translated_t.footprint(u as f64 + du, v as f64 + dv);
            if s.is_some() {
                n += 1;
            }
            samples.push(s);
        }
    }
    let n = n as f64;
    let mut grad_t = vec![0.0; w * h];
    let mut grad_t1 = vec![0.0; w * h];
    let mut t1_valid = vec![false; w * h];
    for i in 0..w * h {
        let Some(fp) = samples[i] else { continue };
        let mut warped = 0.0;
        for corner in 0..4 {
            warped += fp.weights[corner] * translated_t.data()[fp.indices[corner]];
        }
        let s = (warped - translated_t1.data()[i]).signum();
        grad_t1[i] = -s / n;
        t1_valid[i] = true;
        for corner in 0..4 {
            grad_t[fp.indices[corner]] += s * fp.weights[corner] / n;
        }
    }
    Ok((
        ScalarMap::new(w, h, Units::Normalized, grad_t, vec![true; w * h])?,
        ScalarMap::new(w, h, Units::Normalized, grad_t1, t1_valid)?,
    ))
}

/// Gradients of [`super::robust_temporal_loss`] with respect to each of
/// its raster inputs.
#[derive(Debug)]
pub struct RtcGradients {
    pub wrt_frame_t: ScalarMap,
    pub wrt_frame_t1: ScalarMap,
    pub wrt_mask_t: ScalarMap,
    pub wrt_mask_t1: ScalarMap,
    pub wrt_depth: ScalarMap,
}

/// Analytic gradients of the robust temporal loss. Single-channel frames
/// only; valid at configurations where the support is locally constant
/// and the masks sit strictly inside `[0, 1]`.
pub fn robust_temporal_grads(
    frame_t: &Image,
    frame_t1: &Image,
    depth_t: &ScalarMap,
    pose: &Pose,
    mask_t: &ScalarMap,
    mask_t1: &ScalarMap,
    k: &Intrinsics,
) -> Result<RtcGradients> {
    if frame_t.channels() != 1 || frame_t1.channels() != 1 {
        return Err(Error::Domain(
            "temporal-loss gradients support single-channel images only".into(),
        ));
    }
    let parts = rtc_parts(frame_t, frame_t1, depth_t, pose, mask_t, mask_t1, k)?;
    let (w, h) = (frame_t.width(), frame_t.height());
    let n = parts.support.len() as f64;
    if parts.support.is_empty() {
        return Err(Error::EmptySupport("robust temporal loss gradient"));
    }

    let mut g_frame_t = vec![0.0; w * h];
    let mut g_frame_t1 = vec![0.0; w * h];
    let mut g_mask_t = vec![0.0; w * h];
    let mut g_mask_t1 = vec![0.0; w * h];
    let mut g_depth = vec![0.0; w * h];
    let mut on_support = vec![false; w * h];

    for &i in &parts.support {
        on_support[i] = true;
        let (u, v) = (i % w, i / w);
        let (du, dv) = parts.flow.get(u, v);
        let (su, sv) = (u as f64 + du, v as f64 + dv);

        let m0 = mask_t.get(u, v).expect("support implies valid mask").clamp(0.0, 1.0);
        let (warped_val, wgu, wgv) = frame_t1
            .sample_bilinear_with_grad(su, sv, 0)
            .expect("support implies in-bounds sample");
        let (mask_val, mgu, mgv) = parts
            .mask_t1_img
            .sample_bilinear_with_grad(su, sv, 0)
            .expect("support implies in-bounds sample");
        let weight = parts.weight[i];
        debug_assert!((weight - m0 * mask_val).abs() < 1e-12);
        let r = warped_val - frame_t.get(u, v, 0);

        // Direct (non-warped) dependencies.
        g_frame_t[i] = -2.0 * weight * r / n;
        g_mask_t[i] = mask_val * r * r / n;

        // Scatter through the bilinear footprint at the sample location.
        let fp = frame_t1.footprint(su, sv).expect("in-bounds");
        for corner in 0..4 {
            g_frame_t1[fp.indices[corner]] += 2.0 * weight * r * fp.weights[corner] / n;
            g_mask_t1[fp.indices[corner]] += m0 * r * r * fp.weights[corner] / n;
        }

        // Chain through the projection for the depth dependency: the
        // sample location moves with this pixel's own depth.
        let d = depth_t.get(u, v).expect("support implies valid depth");
        let dir = Vector3::new(
            (u as f64 - k.cx()) / k.fx(),
            (v as f64 - k.cy()) / k.fy(),
            1.0,
        );
        let point = pose.transform(&(dir * d));
        let dpoint_dd = pose.rotation() * dir;
        let z = point.z;
        let proj_jac = Matrix2x3::new(
            k.fx() / z,
            0.0,
            -k.fx() * point.x / (z * z),
            0.0,
            k.fy() / z,
            -k.fy() * point.y / (z * z),
        );
        let dphi_dd: Vector2<f64> = proj_jac * dpoint_dd;
        let dwarped_dd = wgu * dphi_dd.x + wgv * dphi_dd.y;
        let dmask_dd = mgu * dphi_dd.x + mgv * dphi_dd.y;
        g_depth[i] = (m0 * dmask_dd * r * r + weight * 2.0 * r * dwarped_dd) / n;
    }

    let all = vec![true; w * h];
    Ok(RtcGradients {
        wrt_frame_t: ScalarMap::new(w, h, Units::Normalized, g_frame_t, on_support.clone())?,
        wrt_frame_t1: ScalarMap::new(w, h, Units::Normalized, g_frame_t1, all.clone())?,
        wrt_mask_t: ScalarMap::new(w, h, Units::Probability, g_mask_t, on_support.clone())?,
        wrt_mask_t1: ScalarMap::new(w, h, Units::Probability, g_mask_t1, all)?,
        wrt_depth: ScalarMap::new(w, h, Units::Meters, g_depth, on_support)?,
    })
}
