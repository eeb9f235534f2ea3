//! Moving-mask synthesis from synthetic ground truth.
//!
//! A synthetic dataset ships dense optical flow, depth, camera pose and
//! instance segmentation for free. The flow explained by camera motion
//! alone (rigid flow from depth + pose) is subtracted from the labeled
//! flow; pixels whose residual magnitude exceeds a threshold are moving,
//! and an optional per-instance majority vote cleans boundary noise.

use crate::error::{ensure_dims, Error, Result};
use crate::geometry::{Intrinsics, Pose};
use crate::imagery::{FlowField, ScalarMap, Units};
use crate::warp::rigid_flow;
use std::collections::HashMap;

/// Default residual threshold (pixels) above which a pixel counts as
/// moving; tolerates sub-pixel rendering noise.
pub const DEFAULT_THRESHOLD_PX: f64 = 1.0;

/// Default fraction of an instance's valid pixels that must exceed the
/// threshold for the whole instance to be flagged moving.
pub const DEFAULT_INSTANCE_FRACTION: f64 = 0.5;

/// Per-pixel integer instance ids; 0 is background / stuff.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMap {
    width: usize,
    height: usize,
    ids: Vec<u32>,
}

impl InstanceMap {
    pub fn new(width: usize, height: usize, ids: Vec<u32>) -> Result<Self> {
        if ids.len() != width * height {
            return Err(Error::Domain(format!(
                "instance buffer length {} does not match {width}x{height}",
                ids.len()
            )));
        }
        Ok(InstanceMap { width, height, ids })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    #[inline]
    pub fn id_at(&self, u: usize, v: usize) -> u32 {
        self.ids[v * self.width + u]
    }
}

/// Euclidean magnitude of `gt_flow - rigid_flow(depth, pose, k)` per
/// pixel; invalid wherever the rigid flow is.
pub fn residual_flow(
    gt_flow: &FlowField,
    depth: &ScalarMap,
    pose: &Pose,
    k: &Intrinsics,
) -> Result<ScalarMap> {
    ensure_dims(
        "residual_flow depth",
        (gt_flow.width(), gt_flow.height()),
        (depth.width(), depth.height()),
    )?;
    let (rigid, valid) = rigid_flow(depth, pose, k)?;
    let (w, h) = (gt_flow.width(), gt_flow.height());
    Ok(ScalarMap::from_fn(w, h, Units::Pixels, |u, v| {
        if valid.data()[v * w + u] != 1.0 {
            return None;
        }
        let (gu, gv) = gt_flow.get(u, v);
        let (ru, rv) = rigid.get(u, v);
        Some(((gu - ru).powi(2) + (gv - rv).powi(2)).sqrt())
    }))
}

/// Thresholds a residual-flow map into a binary moving mask
/// (1 = moving, 0 = static).
///
/// Without instances the rule is purely per-pixel: moving iff
/// `residual > threshold_px`. With instances, an instance whose share of
/// over-threshold valid pixels exceeds `instance_fraction` is flagged as
/// a whole and every one of its pixels inherits the label; background
/// (id 0) stays per-pixel. Instance pixels become valid even where the
/// residual was not (the vote supplies the evidence); other invalid
/// pixels stay invalid and default to static.
pub fn make_moving_mask(
    residual: &ScalarMap,
    instances: Option<&InstanceMap>,
    threshold_px: f64,
    instance_fraction: f64,
) -> Result<ScalarMap> {
    residual.expect_units("make_moving_mask residual", Units::Pixels)?;
    if threshold_px <= 0.0 || threshold_px.is_nan() {
        return Err(Error::Domain(format!(
            "threshold must be positive, got {threshold_px}"
        )));
    }
    if !(instance_fraction > 0.0 && instance_fraction <= 1.0) {
        return Err(Error::Domain(format!(
            "instance fraction must be in (0, 1], got {instance_fraction}"
        )));
    }
    let (w, h) = (residual.width(), residual.height());
    if let Some(inst) = instances {
        ensure_dims(
            "make_moving_mask instances",
            (w, h),
            (inst.width(), inst.height()),
        )?;
    }

    // Per-instance vote over valid residual pixels.
    let mut verdicts: HashMap<u32, bool> = HashMap::new();
    if let Some(inst) = instances {
        let mut counts: HashMap<u32, (usize, usize)> = HashMap::new();
        for v in 0..h {
            for u in 0..w {
                let id = inst.id_at(u, v);
                if id == 0 {
                    continue;
                }
                if let Some(r) = residual.get(u, v) {
                    let entry = counts.entry(id).or_insert((0, 0));
                    entry.1 += 1;
                    if r > threshold_px {
                        entry.0 += 1;
                    }
                }
            }
        }
        for (id, (over, total)) in counts {
            verdicts.insert(id, over as f64 / total as f64 > instance_fraction);
        }
    }

    let mut data = vec![0.0; w * h];
    let mut valid = vec![false; w * h];
    for v in 0..h {
        for u in 0..w {
            let i = v * w + u;
            let id = instances.map_or(0, |inst| inst.id_at(u, v));
            if id != 0 {
                if let Some(&moving) = verdicts.get(&id) {
                    data[i] = if moving { 1.0 } else { 0.0 };
                    valid[i] = true;
                    continue;
                }
                // Instance with no valid residual pixels: fall through to
                // the per-pixel rule.
            }
            if let Some(r) = residual.get(u, v) {
                data[i] = if r > threshold_px { 1.0 } else { 0.0 };
                valid[i] = true;
            }
        }
    }
    ScalarMap::new(w, h, Units::Probability, data, valid)
}

/// Converts a moving mask into the static weights the photometric losses
/// consume: `1 - mask`, clamped to `[0, 1]`. Validity is preserved.
pub fn static_weight(moving_mask: &ScalarMap) -> ScalarMap {
    ScalarMap::from_fn(
        moving_mask.width(),
        moving_mask.height(),
        Units::Probability,
        |u, v| moving_mask.get(u, v).map(|m| (1.0 - m).clamp(0.0, 1.0)),
    )
}
