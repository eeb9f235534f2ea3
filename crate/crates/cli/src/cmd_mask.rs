//! `tempeo mask`: moving-mask synthesis from synthetic ground truth.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use tempeo_core::dataio;
use tempeo_core::movemask::{make_moving_mask, residual_flow};

use crate::exit::{expect_dims, CmdResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DepthFormat {
    /// 16-bit PNG, meters = value / 256, 0 = invalid.
    Kitti,
    /// 16-bit PNG, meters = value / 100, 65535 = saturated.
    Vkitti,
}

pub fn read_depth(
    path: &std::path::Path,
    format: DepthFormat,
) -> tempeo_core::Result<tempeo_core::ScalarMap> {
    match format {
        DepthFormat::Kitti => dataio::read_depth_png_kitti(path),
        DepthFormat::Vkitti => dataio::read_depth_png_vkitti(path),
    }
}

#[derive(Args)]
pub struct MaskArgs {
    /// Ground-truth optical flow (.flo).
    #[arg(long)]
    pub flow: PathBuf,
    /// Ground-truth depth PNG.
    #[arg(long)]
    pub depth: PathBuf,
    /// Depth PNG convention.
    #[arg(long, value_enum, default_value = "vkitti")]
    pub depth_format: DepthFormat,
    /// Camera pose record (12-float row-major [R|t], frame t to t+1).
    #[arg(long)]
    pub pose: PathBuf,
    /// Calibration file with the projection matrix.
    #[arg(long)]
    pub calib: PathBuf,
    /// Projection key inside the calibration file.
    #[arg(long, default_value = "P2")]
    pub calib_key: String,
    /// Instance-segmentation PNG (8/16-bit ids, 0 = background).
    #[arg(long)]
    pub instances: Option<PathBuf>,
    /// Residual-flow threshold in pixels (moving iff residual > threshold).
    #[arg(long, default_value_t = 1.0, value_parser = positive_f64)]
    pub threshold_px: f64,
    /// Fraction of an instance's pixels that must exceed the threshold to
    /// flag the whole instance.
    #[arg(long, default_value_t = 0.5, value_parser = fraction_f64)]
    pub instance_fraction: f64,
    /// Output mask PNG (255 = moving, 0 = static).
    #[arg(long)]
    pub out: PathBuf,
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be positive, got {v}"))
    }
}

fn fraction_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("must be in (0, 1], got {v}"))
    }
}

pub fn run(args: &MaskArgs) -> CmdResult {
    let flow = dataio::read_flow_flo(&args.flow)?;
    let dims = (flow.width(), flow.height());
    let depth = read_depth(&args.depth, args.depth_format)?;
    expect_dims("--depth", &args.depth, (depth.width(), depth.height()), dims)?;
    let pose = dataio::read_pose_record(&args.pose)?;
    let k = dataio::read_calib(&args.calib, &args.calib_key)?;
    let instances = match &args.instances {
        Some(path) => {
            let inst = dataio::read_instance_png(path)?;
            expect_dims("--instances", path, (inst.width(), inst.height()), dims)?;
            Some(inst)
        }
        None => None,
    };

    let residual = residual_flow(&flow, &depth, &pose, &k)?;
    let mask = make_moving_mask(
        &residual,
        instances.as_ref(),
        args.threshold_px,
        args.instance_fraction,
    )?;
    dataio::write_mask_png(&args.out, &mask)?;

    let moving = mask
        .data()
        .iter()
        .zip(mask.validity())
        .filter(|(&m, &ok)| ok && m >= 0.5)
        .count();
    let fraction = moving as f64 / (dims.0 * dims.1) as f64;
    println!("moving_fraction\t{fraction:.6}");
    Ok(())
}
