//! `tempeo`: batch tooling for the synthetic-to-real depth pipeline.
//!
//! Subcommands: `mask` (moving-mask synthesis from synthetic ground
//! truth), `pose` (direct photometric pose refinement), `loss` (the
//! pipeline's loss functions over files), and `eval` (depth-split
//! evaluation). Results go to stdout as TAB-separated records;
//! diagnostics go to stderr.
//!
//! Exit codes: 0 success, 2 I/O or format error, 3 dimension mismatch,
//! 4 empty support, 64 usage error.

mod cmd_eval;
mod cmd_loss;
mod cmd_mask;
mod cmd_pose;
mod exit;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO_FORMAT: i32 = 2;
pub const EXIT_DIMENSIONS: i32 = 3;
pub const EXIT_EMPTY: i32 = 4;
pub const EXIT_USAGE: i32 = 64;

#[derive(Parser)]
#[command(
    name = "tempeo",
    about = "Geometry, losses, moving masks, pose refinement and depth evaluation for temporally-consistent depth pipelines",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a moving mask from ground-truth flow, depth and pose.
    Mask(cmd_mask::MaskArgs),
    /// Refine a relative camera pose by direct photometric alignment.
    Pose(cmd_pose::PoseArgs),
    /// Compute pipeline losses over raster files.
    Loss(cmd_loss::LossArgs),
    /// Evaluate a prediction/ground-truth split manifest.
    Eval(cmd_eval::EvalArgs),
}

fn configure_threads() {
    // TEMPEO_THREADS caps internal parallelism; 0 or unset means auto.
    if let Ok(value) = std::env::var("TEMPEO_THREADS") {
        match value.parse::<usize>() {
            Ok(0) => {}
            Ok(n) => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            Err(_) => {
                eprintln!("warning: TEMPEO_THREADS='{value}' is not a number; using auto");
            }
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => match err.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                print!("{err}");
                std::process::exit(EXIT_OK);
            }
            _ => {
                eprint!("{err}");
                std::process::exit(EXIT_USAGE);
            }
        },
    };
    configure_threads();
    let outcome = match cli.command {
        Command::Mask(args) => cmd_mask::run(&args),
        Command::Pose(args) => cmd_pose::run(&args),
        Command::Loss(args) => cmd_loss::run(&args),
        Command::Eval(args) => cmd_eval::run(&args),
    };
    match outcome {
        Ok(()) => {}
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            std::process::exit(failure.code);
        }
    }
}
