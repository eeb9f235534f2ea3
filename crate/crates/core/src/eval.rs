//! Depth-evaluation protocol: the standard seven metrics with depth caps,
//! crop, median scaling, region splits and whole-split aggregation.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::dataio::{read_depth_png_kitti, read_mask_png};
use crate::error::{ensure_dims, Error, Result};
use crate::imagery::{ScalarMap, Units};
use crate::reduce::pairwise_sum;

/// Predictions are clamped to at least this depth (meters) before log
/// metrics, mirroring the reference evaluation code.
pub const CAP_MIN: f64 = 1e-3;

/// The crop applied by the reference evaluation code, as fractions of
/// image height (rows) and width (columns): `[top, bottom, left, right]`.
pub const GARG_CROP: [f64; 4] = [0.40810811, 0.99189189, 0.03594771, 0.96405229];

/// How predictions are scaled before comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingMode {
    /// Use predictions as-is.
    None,
    /// Multiply predictions by `median(gt) / median(pred)` to resolve the
    /// monocular scale ambiguity.
    Median,
}

/// The seven-metric record, plus the pixel count and protocol knobs it
/// was produced under.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub pixel_count: usize,
    pub cap: f64,
    pub scaling: ScalingMode,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    /// Depth cap in meters (80 and 50 for the standard protocol, 70 for
    /// the central-crop generalization protocol).
    pub cap: f64,
    pub median_scale: bool,
    pub crop: bool,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Gathers the (pred, gt) pairs entering the metrics: jointly valid,
/// inside the crop when enabled, ground truth within `(0, cap]`.
/// Valid ground-truth pixels that are not positive are a data error.
fn select_pairs(
    pred: &ScalarMap,
    gt: &ScalarMap,
    cap: f64,
    crop: bool,
    region: Option<&dyn Fn(usize, usize) -> bool>,
) -> Result<Vec<(f64, f64)>> {
    let (w, h) = (gt.width(), gt.height());
    let (row0, row1, col0, col1) = if crop {
        (
            (GARG_CROP[0] * h as f64) as usize,
            (GARG_CROP[1] * h as f64) as usize,
            (GARG_CROP[2] * w as f64) as usize,
            (GARG_CROP[3] * w as f64) as usize,
        )
    } else {
        (0, h, 0, w)
    };
    let mut pairs = Vec::new();
    for v in row0..row1.min(h) {
        for u in col0..col1.min(w) {
            if let Some(keep) = region {
                if !keep(u, v) {
                    continue;
                }
            }
            let (Some(p), Some(g)) = (pred.get(u, v), gt.get(u, v)) else {
                continue;
            };
            if g <= 0.0 {
                return Err(Error::Domain(format!(
                    "non-positive ground-truth depth {g} at valid pixel ({u},{v})"
                )));
            }
            if g > cap {
                continue;
            }
            pairs.push((p, g));
        }
    }
    Ok(pairs)
}

fn metrics_over(pairs: &[(f64, f64)], cap: f64, scaling: ScalingMode) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::EmptySupport("no pixels left after filtering"));
    }
    let n = pairs.len();
    let mut abs_rel = Vec::with_capacity(n);
    let mut sq_rel = Vec::with_capacity(n);
    let mut sq_err = Vec::with_capacity(n);
    let mut sq_log = Vec::with_capacity(n);
    let (mut c1, mut c2, mut c3) = (0usize, 0usize, 0usize);
    for &(p, g) in pairs {
        let d = p - g;
        abs_rel.push(d.abs() / g);
        sq_rel.push(d * d / g);
        sq_err.push(d * d);
        let dl = p.ln() - g.ln();
        sq_log.push(dl * dl);
        let ratio = (p / g).max(g / p);
        if ratio < 1.25 {
            c1 += 1;
        }
        if ratio < 1.25 * 1.25 {
            c2 += 1;
        }
        if ratio < 1.25 * 1.25 * 1.25 {
            c3 += 1;
        }
    }
    let nf = n as f64;
    Ok(EvalReport {
        abs_rel: pairwise_sum(&abs_rel) / nf,
        sq_rel: pairwise_sum(&sq_rel) / nf,
        rmse: (pairwise_sum(&sq_err) / nf).sqrt(),
        rmse_log: (pairwise_sum(&sq_log) / nf).sqrt(),
        delta1: c1 as f64 / nf,
        delta2: c2 as f64 / nf,
        delta3: c3 as f64 / nf,
        pixel_count: n,
        cap,
        scaling,
    })
}

fn scale_and_clamp(pairs: Vec<(f64, f64)>, cap: f64, median_scale: bool) -> Result<Vec<(f64, f64)>> {
    let ratio = if median_scale {
        let mut preds: Vec<f64> = pairs.iter().map(|&(p, _)| p).collect();
        let mut gts: Vec<f64> = pairs.iter().map(|&(_, g)| g).collect();
        let med_pred = median(&mut preds);
        let med_gt = median(&mut gts);
        if med_pred <= 0.0 {
            return Err(Error::Domain(format!(
                "median predicted depth {med_pred} is not positive; cannot median-scale"
            )));
        }
        med_gt / med_pred
    } else {
        1.0
    };
    Ok(pairs
        .into_iter()
        .map(|(p, g)| ((p * ratio).clamp(CAP_MIN, cap), g))
        .collect())
}

/// Computes the seven metrics of one prediction/ground-truth pair.
pub fn compute_metrics(pred: &ScalarMap, gt: &ScalarMap, opts: &EvalOptions) -> Result<EvalReport> {
    pred.expect_units("compute_metrics prediction", Units::Meters)?;
    gt.expect_units("compute_metrics ground truth", Units::Meters)?;
    ensure_dims(
        "compute_metrics ground truth",
        (pred.width(), pred.height()),
        (gt.width(), gt.height()),
    )?;
    let pairs = select_pairs(pred, gt, opts.cap, opts.crop, None)?;
    if pairs.is_empty() {
        return Err(Error::EmptySupport("no valid pixels under cap/crop"));
    }
    let scaling = if opts.median_scale {
        ScalingMode::Median
    } else {
        ScalingMode::None
    };
    let pairs = scale_and_clamp(pairs, opts.cap, opts.median_scale)?;
    metrics_over(&pairs, opts.cap, scaling)
}

/// Per-pixel region label for the static/moving error split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionLabel {
    Static,
    Moving,
}

/// Partition of the image into static and moving content.
#[derive(Debug, Clone)]
pub struct RegionMask {
    width: usize,
    height: usize,
    labels: Vec<RegionLabel>,
}

impl RegionMask {
    pub fn new(width: usize, height: usize, labels: Vec<RegionLabel>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::Domain(format!(
                "region buffer length {} does not match {width}x{height}",
                labels.len()
            )));
        }
        Ok(RegionMask {
            width,
            height,
            labels,
        })
    }

    /// Builds a region mask from a moving-probability map (>= 0.5 means
    /// moving; invalid pixels count as static).
    pub fn from_moving_mask(mask: &ScalarMap) -> Self {
        let labels = (0..mask.width() * mask.height())
            .map(|i| {
                let (u, v) = (i % mask.width(), i / mask.width());
                match mask.get(u, v) {
                    Some(p) if p >= 0.5 => RegionLabel::Moving,
                    _ => RegionLabel::Static,
                }
            })
            .collect();
        RegionMask {
            width: mask.width(),
            height: mask.height(),
            labels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn label(&self, u: usize, v: usize) -> RegionLabel {
        self.labels[v * self.width + u]
    }
}

/// Reports for the static region, the moving region, and all pixels.
/// Empty regions are flagged by `None` rather than erroring the frame.
#[derive(Debug, Clone)]
pub struct RegionReports {
    pub static_region: Option<EvalReport>,
    pub moving_region: Option<EvalReport>,
    pub all: EvalReport,
}

/// [`compute_metrics`] restricted to each region. Applies the cap but no
/// crop or scaling, so the pixel-weighted squared errors of the two
/// regions sum exactly to the all-area ones.
pub fn region_metrics(
    pred: &ScalarMap,
    gt: &ScalarMap,
    regions: &RegionMask,
    cap: f64,
) -> Result<RegionReports> {
    pred.expect_units("region_metrics prediction", Units::Meters)?;
    gt.expect_units("region_metrics ground truth", Units::Meters)?;
    ensure_dims(
        "region_metrics ground truth",
        (pred.width(), pred.height()),
        (gt.width(), gt.height()),
    )?;
    ensure_dims(
        "region_metrics regions",
        (pred.width(), pred.height()),
        (regions.width(), regions.height()),
    )?;

    let for_label = |want: Option<RegionLabel>| -> Result<Option<EvalReport>> {
        let filter = |u: usize, v: usize| want.is_none_or(|l| regions.label(u, v) == l);
        let pairs = select_pairs(pred, gt, cap, false, Some(&filter))?;
        if pairs.is_empty() {
            return Ok(None);
        }
        let pairs = scale_and_clamp(pairs, cap, false)?;
        Ok(Some(metrics_over(&pairs, cap, ScalingMode::None)?))
    };

    let all = for_label(None)?.ok_or(Error::EmptySupport("no valid pixels in any region"))?;
    Ok(RegionReports {
        static_region: for_label(Some(RegionLabel::Static))?,
        moving_region: for_label(Some(RegionLabel::Moving))?,
        all,
    })
}

/// One manifest entry after evaluation: the frame id (prediction path)
/// and either its reports or the reason it failed.
#[derive(Debug, Clone)]
pub struct FrameOutcome {
    pub id: String,
    pub result: std::result::Result<FrameEval, String>,
}

#[derive(Debug, Clone)]
pub struct FrameEval {
    pub report: EvalReport,
    pub regions: Option<RegionReports>,
}

#[derive(Debug, Clone, Copy)]
pub struct SplitOptions {
    pub eval: EvalOptions,
    /// Expect a third manifest column with a moving-mask PNG and produce
    /// per-region reports.
    pub regions: bool,
}

/// Whole-split evaluation results, in manifest order.
#[derive(Debug)]
pub struct SplitEvaluation {
    pub frames: Vec<FrameOutcome>,
    pub options: SplitOptions,
}

impl SplitEvaluation {
    pub fn evaluated(&self) -> usize {
        self.frames.iter().filter(|f| f.result.is_ok()).count()
    }

    pub fn failed(&self) -> usize {
        self.frames.len() - self.evaluated()
    }

    /// Unweighted mean of the per-frame reports (the aggregation of the
    /// standard protocol); `pixel_count` totals the contributing pixels.
    pub fn mean(&self) -> Option<EvalReport> {
        let reports: Vec<EvalReport> = self
            .frames
            .iter()
            .filter_map(|f| f.result.as_ref().ok().map(|e| e.report))
            .collect();
        mean_of_reports(&reports)
    }

    pub fn mean_region(&self, which: RegionLabel) -> Option<EvalReport> {
        let reports: Vec<EvalReport> = self
            .frames
            .iter()
            .filter_map(|f| f.result.as_ref().ok())
            .filter_map(|e| e.regions.as_ref())
            .filter_map(|r| match which {
                RegionLabel::Static => r.static_region,
                RegionLabel::Moving => r.moving_region,
            })
            .collect();
        mean_of_reports(&reports)
    }

    /// Mean of the all-area region reports (cap-only pipeline).
    pub fn mean_region_all(&self) -> Option<EvalReport> {
        let reports: Vec<EvalReport> = self
            .frames
            .iter()
            .filter_map(|f| f.result.as_ref().ok())
            .filter_map(|e| e.regions.as_ref().map(|r| r.all))
            .collect();
        mean_of_reports(&reports)
    }
}

/// Unweighted mean of per-frame reports.
pub fn mean_of_reports(reports: &[EvalReport]) -> Option<EvalReport> {
    if reports.is_empty() {
        return None;
    }
    let n = reports.len() as f64;
    let sum = |f: &dyn Fn(&EvalReport) -> f64| -> f64 {
        let values: Vec<f64> = reports.iter().map(f).collect();
        pairwise_sum(&values)
    };
    Some(EvalReport {
        abs_rel: sum(&|r| r.abs_rel) / n,
        sq_rel: sum(&|r| r.sq_rel) / n,
        rmse: sum(&|r| r.rmse) / n,
        rmse_log: sum(&|r| r.rmse_log) / n,
        delta1: sum(&|r| r.delta1) / n,
        delta2: sum(&|r| r.delta2) / n,
        delta3: sum(&|r| r.delta3) / n,
        pixel_count: reports.iter().map(|r| r.pixel_count).sum(),
        cap: reports[0].cap,
        scaling: reports[0].scaling,
    })
}

/// A parsed manifest line.
#[derive(Debug, Clone)]
struct ManifestEntry {
    pred: String,
    gt: String,
    region: Option<String>,
}

fn parse_manifest(path: &Path) -> Result<Vec<std::result::Result<ManifestEntry, String>>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut entries = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match fields.as_slice() {
            [pred, gt] => entries.push(Ok(ManifestEntry {
                pred: pred.to_string(),
                gt: gt.to_string(),
                region: None,
            })),
            [pred, gt, region] => entries.push(Ok(ManifestEntry {
                pred: pred.to_string(),
                gt: gt.to_string(),
                region: Some(region.to_string()),
            })),
            _ => entries.push(Err(format!(
                "line {}: expected 'pred<TAB>gt[<TAB>region]', found {} fields",
                line_no + 1,
                fields.len()
            ))),
        }
    }
    Ok(entries)
}

fn evaluate_entry(entry: &ManifestEntry, opts: &SplitOptions) -> std::result::Result<FrameEval, String> {
    let pred = read_depth_png_kitti(Path::new(&entry.pred)).map_err(|e| e.to_string())?;
    let gt = read_depth_png_kitti(Path::new(&entry.gt)).map_err(|e| e.to_string())?;
    let report = compute_metrics(&pred, &gt, &opts.eval).map_err(|e| e.to_string())?;
    let regions = if opts.regions {
        let region_path = entry
            .region
            .as_ref()
            .ok_or_else(|| "regions requested but manifest line has no region column".to_string())?;
        let mask = read_mask_png(Path::new(region_path)).map_err(|e| e.to_string())?;
        let regions = RegionMask::from_moving_mask(&mask);
        Some(region_metrics(&pred, &gt, &regions, opts.eval.cap).map_err(|e| e.to_string())?)
    } else {
        None
    };
    Ok(FrameEval { report, regions })
}

/// Evaluates every `pred<TAB>gt[<TAB>region]` pair listed in a manifest
/// (UTF-8, `#` comments). Frames evaluate in parallel; results keep
/// manifest order and per-frame failures become error entries rather than
/// aborting the batch. An entirely empty manifest is an error.
pub fn evaluate_split(manifest: &Path, options: SplitOptions) -> Result<SplitEvaluation> {
    let entries = parse_manifest(manifest)?;
    if entries.is_empty() {
        return Err(Error::EmptySupport("manifest lists no frames"));
    }
    let frames: Vec<FrameOutcome> = entries
        .par_iter()
        .map(|entry| match entry {
            Ok(e) => FrameOutcome {
                id: e.pred.clone(),
                result: evaluate_entry(e, &options),
            },
            Err(msg) => FrameOutcome {
                id: String::from("<malformed>"),
                result: Err(msg.clone()),
            },
        })
        .collect();
    Ok(SplitEvaluation {
        frames,
        options,
    })
}

pub const CSV_METRIC_HEADER: &str = "abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3,pixel_count";

fn csv_metrics(r: &EvalReport) -> String {
    format!(
        "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
        r.abs_rel, r.sq_rel, r.rmse, r.rmse_log, r.delta1, r.delta2, r.delta3, r.pixel_count
    )
}

/// Writes the evaluation CSV: a header of the seven metrics plus
/// pixel_count, one row per evaluated frame and a final MEAN row. With
/// regions, the same layout repeats per region section (all, static,
/// moving) with a leading `region` column.
pub fn write_report_csv(out: &mut dyn Write, split: &SplitEvaluation) -> std::io::Result<()> {
    if !split.options.regions {
        writeln!(out, "frame,{CSV_METRIC_HEADER}")?;
        for frame in &split.frames {
            if let Ok(eval) = &frame.result {
                writeln!(out, "{},{}", frame.id, csv_metrics(&eval.report))?;
            }
        }
        if let Some(mean) = split.mean() {
            writeln!(out, "MEAN,{}", csv_metrics(&mean))?;
        }
        return Ok(());
    }

    writeln!(out, "region,frame,{CSV_METRIC_HEADER}")?;
    let section = |out: &mut dyn Write,
                   name: &str,
                   pick: &dyn Fn(&RegionReports) -> Option<EvalReport>,
                   mean: Option<EvalReport>|
     -> std::io::Result<()> {
        for frame in &split.frames {
            if let Ok(eval) = &frame.result {
                if let Some(report) = eval.regions.as_ref().and_then(pick) {
                    writeln!(out, "{name},{},{}", frame.id, csv_metrics(&report))?;
                }
            }
        }
        if let Some(mean) = mean {
            writeln!(out, "{name},MEAN,{}", csv_metrics(&mean))?;
        }
        Ok(())
    };
    section(out, "all", &|r| Some(r.all), split.mean_region_all())?;
    section(
        out,
        "static",
        &|r| r.static_region,
        split.mean_region(RegionLabel::Static),
    )?;
    section(
        out,
        "moving",
        &|r| r.moving_region,
        split.mean_region(RegionLabel::Moving),
    )?;
    Ok(())
}
