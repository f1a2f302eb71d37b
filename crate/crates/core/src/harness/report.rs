//! Report emission: canonical JSON, a flat metric CSV, self-contained SVG
//! plots, and side-by-side comparison of two runs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::TrajectoryReport;
use crate::error::{Error, Result};

/// First line of every metric CSV.
pub const CSV_HEADER: &str = "metric,value";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Svg,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "svg" | "svg-plot" => Ok(ReportFormat::Svg),
            other => Err(Error::invalid(format!("unknown report format {other:?}"))),
        }
    }
}

impl TrajectoryReport {
    /// Scalar metrics in a fixed order; this order defines the CSV rows.
    pub fn metrics(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("frames", self.frames as f64),
            ("ate_rmse_m", self.ate_rmse),
            ("inliers_mean", self.inliers.mean),
            ("inliers_std", self.inliers.std),
            ("outliers_mean", self.outliers.mean),
            ("outliers_std", self.outliers.std),
            ("reprojection_px", self.mean_reprojection_px),
            ("wall_time_s", self.wall_time_s),
            ("per_pair_time_s", self.per_pair_time_s),
            ("mask_reduction", self.mask_reduction),
            ("skipped_pairs", self.skipped_pairs as f64),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for (name, value) in self.metrics() {
            writeln!(out, "{name},{value:?}").unwrap();
        }
        out
    }
}

/// Writes `report` in the requested format. For SVG a loss-curve plot is
/// written next to the trajectory plot when `loss_history` is given.
/// Returns every file written.
pub fn emit_report(
    report: &TrajectoryReport,
    format: ReportFormat,
    path: &Path,
    loss_history: Option<&[f64]>,
) -> Result<Vec<PathBuf>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    match format {
        ReportFormat::Json => fs::write(path, report.to_json()? + "\n")?,
        ReportFormat::Csv => fs::write(path, report.to_csv())?,
        ReportFormat::Svg => {
            fs::write(path, trajectory_svg(&report.estimated_centres, &report.groundtruth_centres))?;
            if let Some(history) = loss_history {
                let loss_path = path.with_file_name(format!(
                    "{}_loss.svg",
                    path.file_stem().and_then(|s| s.to_str()).unwrap_or("report")
                ));
                fs::write(&loss_path, loss_svg(history))?;
                return Ok(vec![path.to_path_buf(), loss_path]);
            }
        }
    }
    Ok(vec![path.to_path_buf()])
}

const SVG_SIZE: f64 = 480.0;
const SVG_MARGIN: f64 = 24.0;

/// Maps data bounds onto the plot square, keeping aspect when `equal`.
struct Frame {
    min: (f64, f64),
    scale: (f64, f64),
}

impl Frame {
    fn fit(points: impl Iterator<Item = (f64, f64)>, equal: bool) -> Frame {
        let (mut lo, mut hi) = ((f64::INFINITY, f64::INFINITY), (f64::NEG_INFINITY, f64::NEG_INFINITY));
        for (x, y) in points.filter(|(x, y)| x.is_finite() && y.is_finite()) {
            lo = (lo.0.min(x), lo.1.min(y));
            hi = (hi.0.max(x), hi.1.max(y));
        }
        if !lo.0.is_finite() {
            lo = (0.0, 0.0);
            hi = (1.0, 1.0);
        }
        let span = |a: f64, b: f64| if b - a > 1e-12 { b - a } else { 1.0 };
        let inner = SVG_SIZE - 2.0 * SVG_MARGIN;
        let (mut sx, mut sy) = (inner / span(lo.0, hi.0), inner / span(lo.1, hi.1));
        if equal {
            sx = sx.min(sy);
            sy = sx;
        }
        Frame { min: lo, scale: (sx, sy) }
    }

    fn map(&self, (x, y): (f64, f64)) -> (f64, f64) {
        (
            SVG_MARGIN + (x - self.min.0) * self.scale.0,
            SVG_SIZE - SVG_MARGIN - (y - self.min.1) * self.scale.1,
        )
    }
}

fn polyline(frame: &Frame, points: &[(f64, f64)], colour: &str, label: &str) -> String {
    let coords: Vec<String> = points
        .iter()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|&p| {
            let (x, y) = frame.map(p);
            format!("{x:.2},{y:.2}")
        })
        .collect();
    format!(
        "  <polyline class=\"{label}\" fill=\"none\" stroke=\"{colour}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        coords.join(" ")
    )
}

fn svg_document(title: &str, body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_SIZE}\" height=\"{SVG_SIZE}\" viewBox=\"0 0 {SVG_SIZE} {SVG_SIZE}\">\n  \
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n  \
         <text x=\"{SVG_MARGIN}\" y=\"16\" font-family=\"sans-serif\" font-size=\"12\">{title}</text>\n{body}</svg>\n"
    )
}

/// Top-down (x, y) view of estimated and ground-truth camera centres.
pub fn trajectory_svg(estimated: &[[f64; 3]], groundtruth: &[[f64; 3]]) -> String {
    let est: Vec<(f64, f64)> = estimated.iter().map(|p| (p[0], p[2])).collect();
    let gt: Vec<(f64, f64)> = groundtruth.iter().map(|p| (p[0], p[2])).collect();
    let frame = Frame::fit(est.iter().chain(&gt).copied(), true);
    let body = polyline(&frame, &gt, "#2a7", "groundtruth") + &polyline(&frame, &est, "#c33", "estimate");
    svg_document("trajectory (x-z): green ground truth, red estimate", &body)
}

pub fn loss_svg(history: &[f64]) -> String {
    let pts: Vec<(f64, f64)> = history.iter().enumerate().map(|(i, &l)| (i as f64, l)).collect();
    let frame = Frame::fit(pts.iter().copied(), false);
    svg_document("consistency loss per epoch", &polyline(&frame, &pts, "#36c", "loss"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
}

/// Side-by-side metrics of two runs; `delta = b - a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub label_a: String,
    pub label_b: String,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn row(&self, metric: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("metric,{},{},delta\n", self.label_a, self.label_b);
        for r in &self.rows {
            writeln!(out, "{},{:?},{:?},{:?}", r.metric, r.a, r.b, r.delta).unwrap();
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("| metric | {} | {} | delta |\n|---|---:|---:|---:|\n", self.label_a, self.label_b);
        for r in &self.rows {
            writeln!(out, "| {} | {:.6} | {:.6} | {:+.6} |", r.metric, r.a, r.b, r.delta).unwrap();
        }
        out
    }
}

pub fn compare_reports(a: &TrajectoryReport, b: &TrajectoryReport) -> Result<Comparison> {
    if a.frames != b.frames {
        return Err(Error::invalid(format!(
            "reports cover {} and {} frames",
            a.frames, b.frames
        )));
    }
    let label = |r: &TrajectoryReport| {
        format!("{}{}", r.config.detector, if r.config.masked { "+mask" } else { "" })
    };
    let rows = a
        .metrics()
        .into_iter()
        .zip(b.metrics())
        .map(|((name, va), (_, vb))| ComparisonRow {
            metric: name.to_string(),
            a: va,
            b: vb,
            delta: vb - va,
        })
        .collect();
    Ok(Comparison {
        label_a: label(a),
        label_b: label(b),
        rows,
    })
}
