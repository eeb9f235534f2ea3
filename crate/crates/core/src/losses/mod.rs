//! Loss functions as pure reductions over raster inputs.
//!
//! Five losses: supervised depth regression (L1 on normalized depth),
//! moving-segmentation cross-entropy, the robust masked temporal
//! photometric loss, the flow-guided temporal consistency loss, and SSIM.
//! Expectations are realized as means over valid pixels; summation order
//! is fixed (row-major pairwise tree) so every loss is bit-reproducible.
//!
//! Analytic per-pixel gradients for each loss live in [`grad`].

pub mod grad;

use crate::error::{ensure_dims, Error, Result};
use crate::geometry::{Intrinsics, Pose};
use crate::imagery::{FlowField, Image, ScalarMap, Units};
use crate::reduce::pairwise_sum;
use crate::warp::{flow_warp, rigid_flow};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before
/// logarithms.
pub const PROB_CLAMP: f64 = 1e-7;

/// Slack allowed on probability inputs before they are rejected as out of
/// domain.
pub const PROB_SLACK: f64 = 1e-6;

/// SSIM parameters: uniform window side and the usual stabilizers on
/// `[0, 1]` intensities.
pub const SSIM_WINDOW: usize = 7;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// A reduced loss: the value plus how many pixels actually supported it.
///
/// `value` is 0 whenever the support is empty; check [`LossValue::is_empty`]
/// to tell that apart from a genuine zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub valid_pixels: usize,
}

impl LossValue {
    fn over(values: &[f64]) -> LossValue {
        if values.is_empty() {
            LossValue {
                value: 0.0,
                valid_pixels: 0,
            }
        } else {
            LossValue {
                value: pairwise_sum(values) / values.len() as f64,
                valid_pixels: values.len(),
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.valid_pixels == 0
    }
}

/// How the segmentation loss treats the negative class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegMode {
    /// Full binary cross-entropy `-mean[m log p + (1-m) log(1-p)]`.
    Full,
    /// Positive-class term only, `-mean[m log p]`; degenerate when the
    /// ground truth has no movers, but provided as an explicit mode.
    Literal,
}

/// Mean absolute difference between two normalized depth maps over their
/// jointly valid pixels.
pub fn depth_l1(pred: &ScalarMap, gt: &ScalarMap) -> Result<LossValue> {
    pred.expect_units("depth_l1 prediction", Units::Normalized)?;
    gt.expect_units("depth_l1 ground truth", Units::Normalized)?;
    ensure_dims(
        "depth_l1 ground truth",
        (pred.width(), pred.height()),
        (gt.width(), gt.height()),
    )?;
    let mut residuals = Vec::new();
    for v in 0..pred.height() {
        for u in 0..pred.width() {
            if let (Some(p), Some(g)) = (pred.get(u, v), gt.get(u, v)) {
                residuals.push((p - g).abs());
            }
        }
    }
    Ok(LossValue::over(&residuals))
}

fn check_probability_domain(map: &ScalarMap, what: &str) -> Result<()> {
    for v in 0..map.height() {
        for u in 0..map.width() {
            if let Some(x) = map.get(u, v) {
                if !(-PROB_SLACK..=1.0 + PROB_SLACK).contains(&x) {
                    return Err(Error::Domain(format!(
                        "{what} value {x} at ({u},{v}) outside [0,1]"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Cross-entropy between a predicted moving-probability map and a binary
/// moving mask, over jointly valid pixels.
pub fn moving_seg_loss(
    pred_prob: &ScalarMap,
    gt_mask: &ScalarMap,
    mode: SegMode,
) -> Result<LossValue> {
    pred_prob.expect_units("moving_seg_loss prediction", Units::Probability)?;
    gt_mask.expect_units("moving_seg_loss ground truth", Units::Probability)?;
    ensure_dims(
        "moving_seg_loss ground truth",
        (pred_prob.width(), pred_prob.height()),
        (gt_mask.width(), gt_mask.height()),
    )?;
    check_probability_domain(pred_prob, "predicted probability")?;
    check_probability_domain(gt_mask, "mask")?;
    let mut terms = Vec::new();
    for v in 0..pred_prob.height() {
        for u in 0..pred_prob.width() {
            if let (Some(p), Some(m)) = (pred_prob.get(u, v), gt_mask.get(u, v)) {
                let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                let m = m.clamp(0.0, 1.0);
                let term = match mode {
                    SegMode::Full => -(m * p.ln() + (1.0 - m) * (1.0 - p).ln()),
                    SegMode::Literal => -(m * p.ln()),
                };
                terms.push(term);
            }
        }
    }
    Ok(LossValue::over(&terms))
}

/// Everything the robust temporal loss derives from its inputs before the
/// final reduction; shared with the gradient path so both see identical
/// numbers.
pub(crate) struct RtcParts {
    pub flow: FlowField,
    pub warped: Image,
    /// Clamped frame-(t+1) static weights as an image (the raster actually
    /// sampled).
    pub mask_t1_img: Image,
    /// Combined per-pixel weight `mask_t * warped_mask` (0 where invalid).
    pub weight: Vec<f64>,
    /// Support: valid pixels with strictly positive weight, row-major.
    pub support: Vec<usize>,
}

pub(crate) fn rtc_parts(
    frame_t: &Image,
    frame_t1: &Image,
    depth_t: &ScalarMap,
    pose: &Pose,
    mask_t: &ScalarMap,
    mask_t1: &ScalarMap,
    k: &Intrinsics,
) -> Result<RtcParts> {
    let dims = (frame_t.width(), frame_t.height());
    ensure_dims("robust_temporal_loss frame t+1", dims, (frame_t1.width(), frame_t1.height()))?;
    ensure_dims("robust_temporal_loss depth", dims, (depth_t.width(), depth_t.height()))?;
    ensure_dims("robust_temporal_loss mask t", dims, (mask_t.width(), mask_t.height()))?;
    ensure_dims("robust_temporal_loss mask t+1", dims, (mask_t1.width(), mask_t1.height()))?;
    if frame_t.channels() != frame_t1.channels() {
        return Err(Error::Domain(format!(
            "frames have different channel counts ({} vs {})",
            frame_t.channels(),
            frame_t1.channels()
        )));
    }
    depth_t.expect_units("robust_temporal_loss depth", Units::Meters)?;
    mask_t.expect_units("robust_temporal_loss mask t", Units::Probability)?;
    mask_t1.expect_units("robust_temporal_loss mask t+1", Units::Probability)?;

    let (w, h) = dims;
    let (flow, flow_valid) = rigid_flow(depth_t, pose, k)?;
    let (warped, sample_valid) = flow_warp(frame_t1, &flow)?;

    // Static weights of frame t+1, carried through the same sampling as
    // the intensities (invalid mask pixels weigh zero).
    let mask_t1_img = {
        let data: Vec<f64> = (0..w * h)
            .map(|i| {
                let (u, v) = (i % w, i / w);
                mask_t1.get(u, v).map_or(0.0, |m| m.clamp(0.0, 1.0))
            })
            .collect();
        Image::new(w, h, 1, data)?
    };
    let (warped_mask_img, _) = flow_warp(&mask_t1_img, &flow)?;

    let mut weight = vec![0.0; w * h];
    let mut support = Vec::new();
    for (i, slot) in weight.iter_mut().enumerate() {
        let (u, v) = (i % w, i / w);
        if flow_valid.data()[i] != 1.0 || sample_valid.data()[i] != 1.0 {
            continue;
        }
        let m0 = match mask_t.get(u, v) {
            Some(m) => m.clamp(0.0, 1.0),
            None => continue,
        };
        let wgt = m0 * warped_mask_img.get(u, v, 0);
        *slot = wgt;
        if wgt > 0.0 {
            support.push(i);
        }
    }
    Ok(RtcParts {
        flow,
        warped,
        mask_t1_img,
        weight,
        support,
    })
}

/// Masked temporal photometric consistency: the mean of
/// `weight * residual^2` where the residual compares frame t with frame
/// t+1 warped into its view, and the weight combines the frame-t static
/// mask with the warped frame-(t+1) static mask.
///
/// Masks weight *static* content: 1 keeps a pixel, 0 removes it from the
/// support (so an all-zero mask yields an empty loss, not a zero-valued
/// full-support one). Multi-channel residuals are averaged over channels.
pub fn robust_temporal_loss(
    frame_t: &Image,
    frame_t1: &Image,
    depth_t: &ScalarMap,
    pose: &Pose,
    mask_t: &ScalarMap,
    mask_t1: &ScalarMap,
    k: &Intrinsics,
) -> Result<LossValue> {
    let parts = rtc_parts(frame_t, frame_t1, depth_t, pose, mask_t, mask_t1, k)?;
    let c = frame_t.channels();
    let w = frame_t.width();
    let mut terms = Vec::with_capacity(parts.support.len());
    for &i in &parts.support {
        let (u, v) = (i % w, i / w);
        let mut sq = 0.0;
        for ch in 0..c {
            let r = parts.warped.get(u, v, ch) - frame_t.get(u, v, ch);
            sq += r * r;
        }
        terms.push(parts.weight[i] * sq / c as f64);
    }
    Ok(LossValue::over(&terms))
}

/// Flow-guided temporal consistency: mean absolute difference between the
/// frame-t image warped by the t -> t+1 flow and the frame-(t+1) image,
/// over in-bounds pixels.
pub fn synthetic_temporal_loss(
    translated_t: &Image,
    translated_t1: &Image,
    gt_flow: &FlowField,
) -> Result<LossValue> {
    let dims = (translated_t.width(), translated_t.height());
    ensure_dims(
        "synthetic_temporal_loss frame t+1",
        dims,
        (translated_t1.width(), translated_t1.height()),
    )?;
    ensure_dims(
        "synthetic_temporal_loss flow",
        dims,
        (gt_flow.width(), gt_flow.height()),
    )?;
    if translated_t.channels() != translated_t1.channels() {
        return Err(Error::Domain(format!(
            "frames have different channel counts ({} vs {})",
            translated_t.channels(),
            translated_t1.channels()
        )));
    }
    let (warped, valid) = flow_warp(translated_t, gt_flow)?;
    let c = translated_t.channels();
    let mut terms = Vec::new();
    for v in 0..dims.1 {
        for u in 0..dims.0 {
            if valid.data()[v * dims.0 + u] != 1.0 {
                continue;
            }
            let mut abs = 0.0;
            for ch in 0..c {
                abs += (warped.get(u, v, ch) - translated_t1.get(u, v, ch)).abs();
            }
            terms.push(abs / c as f64);
        }
    }
    Ok(LossValue::over(&terms))
}

/// Per-pixel SSIM over a uniform 7x7 window (population statistics),
/// averaged over channels. Pixels whose window does not fit inside the
/// image are invalid.
pub fn ssim_map(a: &Image, b: &Image) -> Result<ScalarMap> {
    let dims = (a.width(), a.height());
    ensure_dims("ssim second image", dims, (b.width(), b.height()))?;
    if a.channels() != b.channels() {
        return Err(Error::Domain(format!(
            "ssim inputs have different channel counts ({} vs {})",
            a.channels(),
            b.channels()
        )));
    }
    if dims.0 < SSIM_WINDOW || dims.1 < SSIM_WINDOW {
        return Err(Error::TooSmall {
            what: "ssim input",
            width: dims.0,
            height: dims.1,
            min_width: SSIM_WINDOW,
            min_height: SSIM_WINDOW,
        });
    }
    let half = SSIM_WINDOW / 2;
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let c = a.channels();
    let map = ScalarMap::from_fn(dims.0, dims.1, Units::Normalized, |u, v| {
        if u < half || v < half || u + half >= dims.0 || v + half >= dims.1 {
            return None;
        }
        let mut acc = 0.0;
        for ch in 0..c {
            let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for wv in v - half..=v + half {
                for wu in u - half..=u + half {
                    let x = a.get(wu, wv, ch);
                    let y = b.get(wu, wv, ch);
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
            acc += (2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2)
                / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
        }
        Some(acc / c as f64)
    });
    Ok(map)
}

/// `mean (1 - SSIM) / 2` over the valid SSIM pixels.
pub fn ssim_loss(a: &Image, b: &Image) -> Result<LossValue> {
    let map = ssim_map(a, b)?;
    let mut terms = Vec::new();
    for v in 0..map.height() {
        for u in 0..map.width() {
            if let Some(s) = map.get(u, v) {
                terms.push((1.0 - s) * 0.5);
            }
        }
    }
    Ok(LossValue::over(&terms))
}
