//! `tempeo loss`: the pipeline's loss functions over raster files.
//!
//! Select losses with `--rtc --stc --syn --seg --ssim`. Each selected
//! loss prints `name<TAB>value<TAB>valid_pixels`. A weighted total is
//! printed when more than one loss is selected or any weight is given;
//! weights are deliberately defaultless, so a total always requires an
//! explicit `--w-<name>` for every selected loss.

use std::path::PathBuf;

use clap::Args;
use tempeo_core::dataio;
use tempeo_core::imagery::Image;
use tempeo_core::losses::{
    depth_l1, moving_seg_loss, robust_temporal_loss, ssim_loss, synthetic_temporal_loss,
    LossValue, SegMode,
};

use crate::cmd_mask::{read_depth, DepthFormat};
use crate::exit::{expect_dims, CmdResult, Failure};

#[derive(Args)]
pub struct LossArgs {
    /// Robust temporal photometric consistency (needs frames, depth,
    /// calib, pose; masks optional).
    #[arg(long)]
    pub rtc: bool,
    /// Flow-guided temporal consistency (needs frames and --gt-flow).
    #[arg(long)]
    pub stc: bool,
    /// Supervised depth L1 on normalized depth (needs --pred-depth and
    /// --gt-depth).
    #[arg(long)]
    pub syn: bool,
    /// Moving-segmentation cross-entropy (needs --pred-mask and
    /// --gt-mask).
    #[arg(long)]
    pub seg: bool,
    /// Structural-similarity loss between the two frames.
    #[arg(long)]
    pub ssim: bool,

    #[arg(long)]
    pub frame_t: Option<PathBuf>,
    #[arg(long)]
    pub frame_t1: Option<PathBuf>,
    #[arg(long)]
    pub depth: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "kitti")]
    pub depth_format: DepthFormat,
    #[arg(long)]
    pub calib: Option<PathBuf>,
    #[arg(long, default_value = "P2")]
    pub calib_key: String,
    #[arg(long)]
    pub pose: Option<PathBuf>,
    /// Frame-t moving mask (255 = moving); all-static when omitted.
    #[arg(long)]
    pub mask_t: Option<PathBuf>,
    /// Frame-(t+1) moving mask.
    #[arg(long)]
    pub mask_t1: Option<PathBuf>,
    #[arg(long)]
    pub gt_flow: Option<PathBuf>,
    #[arg(long)]
    pub pred_depth: Option<PathBuf>,
    #[arg(long)]
    pub gt_depth: Option<PathBuf>,
    #[arg(long)]
    pub pred_mask: Option<PathBuf>,
    #[arg(long)]
    pub gt_mask: Option<PathBuf>,
    /// Use the literal positive-class-only segmentation loss.
    #[arg(long)]
    pub seg_literal: bool,
    /// Keep RGB channels in photometric losses instead of the default
    /// grayscale conversion.
    #[arg(long)]
    pub rgb: bool,

    /// Weights for the total (no defaults on purpose).
    #[arg(long)]
    pub w_rtc: Option<f64>,
    #[arg(long)]
    pub w_stc: Option<f64>,
    #[arg(long)]
    pub w_syn: Option<f64>,
    #[arg(long)]
    pub w_seg: Option<f64>,
    #[arg(long)]
    pub w_ssim: Option<f64>,
}

fn require<'a>(opt: &'a Option<PathBuf>, flag: &str, loss: &str) -> Result<&'a PathBuf, Failure> {
    opt.as_ref()
        .ok_or_else(|| Failure::usage(format!("--{loss} requires {flag}")))
}

struct LoadedFrames {
    t: Image,
    t1: Image,
}

fn load_frames(args: &LossArgs, loss: &str) -> Result<LoadedFrames, Failure> {
    let path_t = require(&args.frame_t, "--frame-t", loss)?;
    let path_t1 = require(&args.frame_t1, "--frame-t1", loss)?;
    let mut t = dataio::read_image_png(path_t)?;
    let mut t1 = dataio::read_image_png(path_t1)?;
    expect_dims(
        "--frame-t1",
        path_t1,
        (t1.width(), t1.height()),
        (t.width(), t.height()),
    )?;
    if !args.rgb {
        t = t.to_grayscale();
        t1 = t1.to_grayscale();
    }
    Ok(LoadedFrames { t, t1 })
}

/// Moving mask from a PNG converted to static weights, or all-static.
fn static_weights(
    path: &Option<PathBuf>,
    dims: (usize, usize),
) -> Result<tempeo_core::ScalarMap, Failure> {
    match path {
        Some(p) => {
            let moving = dataio::read_mask_png(p)?;
            expect_dims("mask", p, (moving.width(), moving.height()), dims)?;
            Ok(tempeo_core::movemask::static_weight(&moving))
        }
        None => Ok(tempeo_core::ScalarMap::filled(
            dims.0,
            dims.1,
            tempeo_core::Units::Probability,
            1.0,
        )),
    }
}

pub fn run(args: &LossArgs) -> CmdResult {
    let selected: Vec<&str> = [
        (args.rtc, "rtc"),
        (args.stc, "stc"),
        (args.syn, "syn"),
        (args.seg, "seg"),
        (args.ssim, "ssim"),
    ]
    .iter()
    .filter(|(on, _)| *on)
    .map(|&(_, name)| name)
    .collect();
    if selected.is_empty() {
        return Err(Failure::usage(
            "select at least one of --rtc --stc --syn --seg --ssim",
        ));
    }

    // Weight completeness is a usage question; settle it before touching
    // any input file.
    let weight_of = |name: &str| match name {
        "rtc" => args.w_rtc,
        "stc" => args.w_stc,
        "syn" => args.w_syn,
        "seg" => args.w_seg,
        "ssim" => args.w_ssim,
        _ => unreachable!(),
    };
    let any_weight = selected.iter().any(|&n| weight_of(n).is_some());
    let total_requested = selected.len() > 1 || any_weight;
    if total_requested {
        for &name in &selected {
            if weight_of(name).is_none() {
                return Err(Failure::usage(format!(
                    "a weighted total was requested but --w-{name} is missing (weights have no defaults)"
                )));
            }
        }
    }

    let mut results: Vec<(&str, LossValue)> = Vec::new();
    for &name in &selected {
        let value = match name {
            "rtc" => {
                let frames = load_frames(args, "rtc")?;
                let dims = (frames.t.width(), frames.t.height());
                let depth_path = require(&args.depth, "--depth", "rtc")?;
                let depth = read_depth(depth_path, args.depth_format)?;
                expect_dims("--depth", depth_path, (depth.width(), depth.height()), dims)?;
                let pose_path = require(&args.pose, "--pose", "rtc")?;
                let pose = dataio::read_pose_record(pose_path)?;
                let calib_path = require(&args.calib, "--calib", "rtc")?;
                let k = dataio::read_calib(calib_path, &args.calib_key)?;
                let mask_t = static_weights(&args.mask_t, dims)?;
                let mask_t1 = static_weights(&args.mask_t1, dims)?;
                robust_temporal_loss(&frames.t, &frames.t1, &depth, &pose, &mask_t, &mask_t1, &k)?
            }
            "stc" => {
                let frames = load_frames(args, "stc")?;
                let flow_path = require(&args.gt_flow, "--gt-flow", "stc")?;
                let flow = dataio::read_flow_flo(flow_path)?;
                expect_dims(
                    "--gt-flow",
                    flow_path,
                    (flow.width(), flow.height()),
                    (frames.t.width(), frames.t.height()),
                )?;
                synthetic_temporal_loss(&frames.t, &frames.t1, &flow)?
            }
            "syn" => {
                let pred_path = require(&args.pred_depth, "--pred-depth", "syn")?;
                let gt_path = require(&args.gt_depth, "--gt-depth", "syn")?;
                let pred = dataio::normalize_depth(&read_depth(pred_path, args.depth_format)?)?;
                let gt = dataio::normalize_depth(&read_depth(gt_path, args.depth_format)?)?;
                expect_dims(
                    "--gt-depth",
                    gt_path,
                    (gt.width(), gt.height()),
                    (pred.width(), pred.height()),
                )?;
                depth_l1(&pred, &gt)?
            }
            "seg" => {
                let pred_path = require(&args.pred_mask, "--pred-mask", "seg")?;
                let gt_path = require(&args.gt_mask, "--gt-mask", "seg")?;
                let pred = dataio::read_mask_png(pred_path)?;
                let gt = dataio::read_mask_png(gt_path)?;
                expect_dims(
                    "--gt-mask",
                    gt_path,
                    (gt.width(), gt.height()),
                    (pred.width(), pred.height()),
                )?;
                let mode = if args.seg_literal {
                    SegMode::Literal
                } else {
                    SegMode::Full
                };
                moving_seg_loss(&pred, &gt, mode)?
            }
            "ssim" => {
                let frames = load_frames(args, "ssim")?;
                ssim_loss(&frames.t, &frames.t1)?
            }
            _ => unreachable!(),
        };
        results.push((name, value));
    }

    for (name, value) in &results {
        println!("{name}\t{:.9}\t{}", value.value, value.valid_pixels);
    }
    if total_requested {
        let mut total = 0.0;
        for (name, value) in &results {
            total += weight_of(name).expect("validated above") * value.value;
        }
        println!("total\t{total:.9}");
    }
    Ok(())
}
