//! `tempeo eval`: depth evaluation over a split manifest.

use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use tempeo_core::eval::{
    evaluate_split, write_report_csv, EvalOptions, EvalReport, SplitOptions, CSV_METRIC_HEADER,
};

use crate::exit::{CmdResult, Failure};
use crate::EXIT_EMPTY;

#[derive(Args)]
pub struct EvalArgs {
    /// Manifest: one `pred<TAB>gt[<TAB>region_mask]` per line, `#`
    /// comments. Depth PNGs use the KITTI convention.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Depth cap in meters (80/50 for the standard protocol, 70 for the
    /// central-crop generalization protocol).
    #[arg(long, default_value_t = 80.0, value_parser = positive_f64)]
    pub cap: f64,
    /// Rescale predictions by median(gt)/median(pred) per frame.
    #[arg(long)]
    pub median_scale: bool,
    /// Apply the standard evaluation crop.
    #[arg(long)]
    pub crop: bool,
    /// Produce static/moving/all region sections; requires the third
    /// manifest column (moving-mask PNG, 255 = moving).
    #[arg(long)]
    pub regions: bool,
    /// Write the per-frame CSV here.
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be positive, got {v}"))
    }
}

fn tsv_row(label: &str, r: &EvalReport) -> String {
    format!(
        "{label}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}",
        r.abs_rel, r.sq_rel, r.rmse, r.rmse_log, r.delta1, r.delta2, r.delta3, r.pixel_count
    )
}

pub fn run(args: &EvalArgs) -> CmdResult {
    let options = SplitOptions {
        eval: EvalOptions {
            cap: args.cap,
            median_scale: args.median_scale,
            crop: args.crop,
        },
        regions: args.regions,
    };
    let split = evaluate_split(&args.manifest, options)?;

    for frame in &split.frames {
        if let Err(msg) = &frame.result {
            eprintln!("frame {}: {msg}", frame.id);
        }
    }
    eprintln!(
        "evaluated {}/{} frames",
        split.evaluated(),
        split.frames.len()
    );

    let Some(mean) = split.mean() else {
        return Err(Failure {
            code: EXIT_EMPTY,
            message: "no frame evaluated successfully".into(),
        });
    };

    if let Some(csv_path) = &args.out_csv {
        let mut file = std::fs::File::create(csv_path).map_err(Failure::from)?;
        write_report_csv(&mut file, &split).map_err(Failure::from)?;
        file.flush().map_err(Failure::from)?;
    }

    println!("frame\t{}", CSV_METRIC_HEADER.replace(',', "\t"));
    println!("{}", tsv_row("MEAN", &mean));
    if args.regions {
        if let Some(r) = split.mean_region_all() {
            println!("{}", tsv_row("MEAN_all", &r));
        }
        if let Some(r) = split.mean_region(tempeo_core::RegionLabel::Static) {
            println!("{}", tsv_row("MEAN_static", &r));
        }
        if let Some(r) = split.mean_region(tempeo_core::RegionLabel::Moving) {
            println!("{}", tsv_row("MEAN_moving", &r));
        }
    }
    Ok(())
}
