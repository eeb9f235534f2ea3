//! `tempeo pose`: direct photometric pose refinement.

use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use tempeo_core::dataio;
use tempeo_core::ddvo::{refine_pose, SolverConfig};
use tempeo_core::geometry::Pose;
use tempeo_core::imagery::{ScalarMap, Units};
use tempeo_core::movemask::static_weight;

use crate::cmd_mask::{read_depth, DepthFormat};
use crate::exit::{expect_dims, CmdResult, Failure};

#[derive(Args)]
pub struct PoseArgs {
    /// Frame t image PNG.
    #[arg(long)]
    pub frame_t: PathBuf,
    /// Frame t+1 image PNG.
    #[arg(long)]
    pub frame_t1: PathBuf,
    /// Frame-t depth PNG.
    #[arg(long)]
    pub depth: PathBuf,
    /// Depth PNG convention.
    #[arg(long, value_enum, default_value = "kitti")]
    pub depth_format: DepthFormat,
    /// Calibration file with the projection matrix.
    #[arg(long)]
    pub calib: PathBuf,
    /// Projection key inside the calibration file.
    #[arg(long, default_value = "P2")]
    pub calib_key: String,
    /// Initial pose record; identity when omitted.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Moving-mask PNG (255 = moving); masked pixels are excluded.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Pyramid levels.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..))]
    pub levels: u32,
    /// Iterations per level.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u32).range(1..))]
    pub max_iterations: u32,
    /// Convergence tolerance on the twist-update norm.
    #[arg(long, default_value_t = 1e-9, value_parser = positive_flag)]
    pub tolerance: f64,
    /// Initial Levenberg-Marquardt damping.
    #[arg(long, default_value_t = 1e-4, value_parser = positive_flag)]
    pub lambda0: f64,
    /// Huber threshold on intensity residuals.
    #[arg(long, default_value_t = 0.1, value_parser = positive_flag)]
    pub huber_delta: f64,
    /// Output pose record path.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-iteration trace CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

fn positive_flag(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be positive and finite, got {v}"))
    }
}

pub fn run(args: &PoseArgs) -> CmdResult {
    let frame_t = dataio::read_image_png(&args.frame_t)?;
    let dims = (frame_t.width(), frame_t.height());
    let frame_t1 = dataio::read_image_png(&args.frame_t1)?;
    expect_dims(
        "--frame-t1",
        &args.frame_t1,
        (frame_t1.width(), frame_t1.height()),
        dims,
    )?;
    let depth = read_depth(&args.depth, args.depth_format)?;
    expect_dims("--depth", &args.depth, (depth.width(), depth.height()), dims)?;
    let k = dataio::read_calib(&args.calib, &args.calib_key)?;
    let init = match &args.init {
        Some(path) => dataio::read_pose_record(path)?,
        None => Pose::identity(),
    };
    let weights = match &args.mask {
        Some(path) => {
            let moving = dataio::read_mask_png(path)?;
            expect_dims("--mask", path, (moving.width(), moving.height()), dims)?;
            static_weight(&moving)
        }
        None => ScalarMap::filled(dims.0, dims.1, Units::Probability, 1.0),
    };
    let cfg = SolverConfig {
        levels: args.levels as usize,
        max_iterations: args.max_iterations as usize,
        tolerance: args.tolerance,
        initial_lambda: args.lambda0,
        huber_delta: args.huber_delta,
        ..SolverConfig::default()
    };
    let (pose, trace) = refine_pose(&frame_t, &frame_t1, &depth, &init, &weights, &k, &cfg)?;
    dataio::write_pose_record(&args.out, &pose)?;

    if let Some(trace_path) = &args.trace {
        let mut file = std::fs::File::create(trace_path).map_err(Failure::from)?;
        writeln!(file, "level,iteration,cost,step_norm,lambda")?;
        for rec in &trace.iterations {
            writeln!(
                file,
                "{},{},{:.12e},{:.12e},{:.12e}",
                rec.level, rec.iteration, rec.cost, rec.step_norm, rec.lambda
            )?;
        }
    }

    println!("termination\t{}", trace.termination.name());
    println!("accepted_steps\t{}", trace.iterations.len());
    if let Some(last) = trace.iterations.last() {
        println!("final_cost\t{:.12e}", last.cost);
    }
    Ok(())
}
