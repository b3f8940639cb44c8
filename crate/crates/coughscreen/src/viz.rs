//! Scatter-plot emission for projected feature clouds.
//!
//! Writes a standalone SVG next to a CSV of the raw coordinates, so the plot
//! can be regenerated or restyled by external tooling. Output bytes are a
//! pure function of the input: point order, float formatting, and color
//! assignment are all fixed.

use crate::classify::CovidLabel;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 48.0;
const COVID_FILL: &str = "#d62728";
const HEALTHY_FILL: &str = "#1f77b4";

#[derive(Debug, Error)]
pub enum VizError {
    #[error("failed to write {path}: {source}")]
    IoFailure {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("no points to plot")]
    NoPoints,
}

/// One projected sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPoint {
    pub x: f64,
    pub y: f64,
    pub label: CovidLabel,
    pub subject_id: String,
    pub day_index: u32,
}

/// Paths written by [`emit_scatter`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScatterFiles {
    pub svg: PathBuf,
    pub csv: PathBuf,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Map a data range onto `[MARGIN, extent - MARGIN]`; a degenerate range
/// lands every point in the middle.
fn scale(value: f64, min: f64, max: f64, extent: f64, invert: bool) -> f64 {
    let t = if max > min { (value - min) / (max - min) } else { 0.5 };
    let t = if invert { 1.0 - t } else { t };
    MARGIN + t * (extent - 2.0 * MARGIN)
}

/// Subject with the most points; ties go to the lexicographically smallest
/// id. Keeps the default highlight stable under reordering of the input.
fn auto_highlight(points: &[ScatterPoint]) -> &str {
    let mut counts: std::collections::BTreeMap<&str, usize> = std::collections::BTreeMap::new();
    for p in points {
        *counts.entry(p.subject_id.as_str()).or_default() += 1;
    }
    counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(id, _)| *id)
        .expect("points is non-empty")
}

/// Emit `<base>.svg` and `<base>.csv` for a projected point cloud. Fill
/// encodes the class; the highlighted subject (default: the one with the
/// most samples) gets a black outline and per-point day markers, tracing one
/// donor's samples across days. Identical input produces byte-identical
/// files.
pub fn emit_scatter(
    points: &[ScatterPoint],
    base: &Path,
    highlight: Option<&str>,
) -> Result<ScatterFiles, VizError> {
    if points.is_empty() {
        return Err(VizError::NoPoints);
    }
    let highlight = highlight.unwrap_or_else(|| auto_highlight(points));

    let mut csv = String::from("x,y,label,subject_id,day_index\n");
    for p in points {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            p.x,
            p.y,
            p.label,
            csv_field(&p.subject_id),
            p.day_index
        );
    }

    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        x_min = x_min.min(p.x);
        x_max = x_max.max(p.x);
        y_min = y_min.min(p.y);
        y_max = y_max.max(p.y);
    }

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(
        svg,
        "  <rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>"
    );
    // Legend, fixed position and order.
    let _ = writeln!(
        svg,
        "  <circle cx=\"{x}\" cy=\"20\" r=\"5\" fill=\"{COVID_FILL}\"/><text x=\"{tx}\" y=\"24\" font-family=\"sans-serif\" font-size=\"12\">covid</text>",
        x = WIDTH - 150.0,
        tx = WIDTH - 140.0
    );
    let _ = writeln!(
        svg,
        "  <circle cx=\"{x}\" cy=\"40\" r=\"5\" fill=\"{HEALTHY_FILL}\"/><text x=\"{tx}\" y=\"44\" font-family=\"sans-serif\" font-size=\"12\">healthy</text>",
        x = WIDTH - 150.0,
        tx = WIDTH - 140.0
    );
    for p in points {
        let cx = scale(p.x, x_min, x_max, WIDTH, false);
        let cy = scale(p.y, y_min, y_max, HEIGHT, true);
        let fill = match p.label {
            CovidLabel::Covid => COVID_FILL,
            CovidLabel::Healthy => HEALTHY_FILL,
        };
        if p.subject_id == highlight {
            let _ = writeln!(
                svg,
                "  <circle cx=\"{cx}\" cy=\"{cy}\" r=\"5\" fill=\"{fill}\" stroke=\"#000000\" stroke-width=\"1.5\"/>"
            );
            let _ = writeln!(
                svg,
                "  <text x=\"{tx}\" y=\"{ty}\" font-family=\"sans-serif\" font-size=\"9\">d{}</text>",
                p.day_index,
                tx = cx + 7.0,
                ty = cy - 7.0
            );
        } else {
            let _ = writeln!(
                svg,
                "  <circle cx=\"{cx}\" cy=\"{cy}\" r=\"4\" fill=\"{fill}\" fill-opacity=\"0.75\"/>"
            );
        }
    }
    let _ = writeln!(svg, "</svg>");

    let files = ScatterFiles {
        svg: base.with_extension("svg"),
        csv: base.with_extension("csv"),
    };
    std::fs::write(&files.csv, csv).map_err(|source| VizError::IoFailure {
        path: files.csv.clone(),
        source,
    })?;
    std::fs::write(&files.svg, svg).map_err(|source| VizError::IoFailure {
        path: files.svg.clone(),
        source,
    })?;
    Ok(files)
}
