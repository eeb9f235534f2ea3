//! Bit-exact ingestion and emission of the on-disk formats, plus the
//! depth normalization and resizing pre-processing.
//!
//! Every reader rejects malformed input instead of coercing it, and every
//! writer/reader pair round-trips within the format's quantization. All
//! binary numerics are little-endian.

mod flo;
mod png;
mod resize;
mod text;

pub use flo::{read_flow_flo, write_flow_flo, FLO_MAGIC};
pub use png::{
    read_depth_png_kitti, read_depth_png_vkitti, read_image_png, read_instance_png, read_mask_png,
    write_depth_png_kitti, write_depth_png_vkitti, write_image_png, write_mask_png,
};
pub use resize::{resize_depth_bilinear, resize_image_bilinear, resize_map_nearest};
pub use text::{read_calib, read_pose_record, write_pose_record};

use crate::error::Result;
use crate::imagery::{ScalarMap, Units};

/// Depth range (meters) mapped onto `[-1, 1]` by the normalization.
pub const DEPTH_NORM_MAX: f64 = 80.0;

/// Maps metric depth from `[0, 80]` onto `[-1, 1]`: `n = d / 40 - 1`,
/// with anything beyond 80 m labeled 1. Validity is preserved.
pub fn normalize_depth(depth: &ScalarMap) -> Result<ScalarMap> {
    depth.expect_units("normalize_depth input", Units::Meters)?;
    Ok(ScalarMap::from_fn(
        depth.width(),
        depth.height(),
        Units::Normalized,
        |u, v| {
            depth.get(u, v).map(|d| {
                if d > DEPTH_NORM_MAX {
                    1.0
                } else {
                    d / (DEPTH_NORM_MAX / 2.0) - 1.0
                }
            })
        },
    ))
}

/// Inverse of [`normalize_depth`] on its range: `d = 40 * (n + 1)`.
pub fn denormalize_depth(normalized: &ScalarMap) -> Result<ScalarMap> {
    normalized.expect_units("denormalize_depth input", Units::Normalized)?;
    Ok(ScalarMap::from_fn(
        normalized.width(),
        normalized.height(),
        Units::Meters,
        |u, v| {
            normalized
                .get(u, v)
                .map(|n| (n + 1.0) * (DEPTH_NORM_MAX / 2.0))
        },
    ))
}
