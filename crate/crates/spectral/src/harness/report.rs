//! Reports derived from persisted cell results: per-class difference tables
//! between two models and SVG curves of the aggregate metrics.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::experiment::CellResult;
use crate::error::{Result, SpectralError};

/// Load every cell result persisted under `<dir>/cells/`.
pub fn load_cells(dir: &Path) -> Result<Vec<CellResult>> {
    let cells_dir = dir.join("cells");
    let mut cells = Vec::new();
    let entries = std::fs::read_dir(&cells_dir).map_err(|_| {
        SpectralError::MissingFile(cells_dir.clone())
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    for path in paths {
        let text = std::fs::read_to_string(&path)?;
        cells.push(serde_json::from_str(&text)?);
    }
    if cells.is_empty() {
        return Err(SpectralError::EmptyInput(format!(
            "no cell results under {}",
            cells_dir.display()
        )));
    }
    Ok(cells)
}

/// One row of the model-difference table.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffRow {
    pub class_index: usize,
    pub class_name: String,
    /// Seed-mean number of training samples of the class.
    pub sample_count: f64,
    pub acc_a: Option<f64>,
    pub acc_b: Option<f64>,
    pub delta: Option<f64>,
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let present: Vec<f64> = values.flatten().collect();
    if present.is_empty() {
        None
    } else {
        Some(present.iter().sum::<f64>() / present.len() as f64)
    }
}

/// Per-class test-accuracy comparison between two cell groups (seed means).
/// Ties per-class accuracy to the number of training samples behind it, so
/// gaps on rare classes are visible next to their support.
pub fn difference_rows(
    a: &[CellResult],
    b: &[CellResult],
    class_names: &[String],
) -> Result<Vec<DiffRow>> {
    if a.is_empty() || b.is_empty() {
        return Err(SpectralError::EmptyInput("difference table needs cells on both sides".into()));
    }
    let classes = class_names.len();
    for cell in a.iter().chain(b) {
        if cell.train_counts.len() != classes {
            return Err(SpectralError::Shape(format!(
                "cell {} carries {} classes, expected {classes}",
                cell.model,
                cell.train_counts.len()
            )));
        }
    }
    let mut rows = Vec::with_capacity(classes);
    for c in 0..classes {
        let sample_count =
            a.iter().map(|cell| cell.train_counts[c] as f64).sum::<f64>() / a.len() as f64;
        let acc_a = mean_opt(a.iter().map(|cell| cell.test.per_class_acc[c]));
        let acc_b = mean_opt(b.iter().map(|cell| cell.test.per_class_acc[c]));
        let delta = match (acc_a, acc_b) {
            (Some(x), Some(y)) => Some(y - x),
            _ => None,
        };
        rows.push(DiffRow {
            class_index: c,
            class_name: class_names[c].clone(),
            sample_count,
            acc_a,
            acc_b,
            delta,
        });
    }
    Ok(rows)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Render named series as a minimal polyline chart.
pub fn svg_line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (60.0, 20.0, 40.0, 50.0);
    let points: Vec<(f64, f64)> = series.iter().flat_map(|(_, pts)| pts.iter().copied()).collect();
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if points.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let sy = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">{title}</text>\n",
        w / 2.0
    ));
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{left}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n",
        h - bottom,
        w - right
    ));
    svg.push_str(&format!(
        "<line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - bottom
    ));
    // Axis labels and range ticks.
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>\n",
        (left + w - right) / 2.0,
        h - 10.0
    ));
    svg.push_str(&format!(
        "<text x=\"15\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 15 {0})\">{y_label}</text>\n",
        (top + h - bottom) / 2.0
    ));
    svg.push_str(&format!(
        "<text x=\"{left}\" y=\"{}\" text-anchor=\"middle\">{x0:.3}</text>\n",
        h - bottom + 18.0
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x1:.3}</text>\n",
        w - right,
        h - bottom + 18.0
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{y0:.3}</text>\n",
        left - 6.0,
        h - bottom + 4.0
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{y1:.3}</text>\n",
        left - 6.0,
        top + 4.0
    ));
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> =
            pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            coords.join(" ")
        ));
        for &(x, y) in pts {
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                sx(x),
                sy(y)
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{name}</text>\n",
            w - right - 150.0,
            top + 16.0 * i as f64 + 4.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Seed-mean of (share, metric) per share, in share order.
fn share_curve(cells: &[CellResult], metric: fn(&CellResult) -> f64) -> Vec<(f64, f64)> {
    let mut groups: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for cell in cells {
        groups.entry(cell.share_pct).or_default().push(metric(cell));
    }
    groups
        .into_iter()
        .map(|(share, vals)| (share as f64, vals.iter().sum::<f64>() / vals.len() as f64))
        .collect()
}

/// Compare two result directories: write a per-class difference CSV and SVG
/// curves of test OA and mIoU over the training share. Returns
/// `(diff_csv, svg)` paths.
pub fn write_report(
    out_dir: &Path,
    a_dir: &Path,
    b_dir: &Path,
    class_names: &[String],
) -> Result<(PathBuf, PathBuf)> {
    let a = load_cells(a_dir)?;
    let b = load_cells(b_dir)?;
    let name_a = a[0].model.clone();
    let name_b = b[0].model.clone();
    // Per-class differences at the largest share both sides ran.
    let top_share = a
        .iter()
        .map(|c| c.share_pct)
        .filter(|s| b.iter().any(|c| c.share_pct == *s))
        .max()
        .ok_or_else(|| {
            SpectralError::EmptyInput("the two result sets share no training share".into())
        })?;
    let a_top: Vec<CellResult> = a.iter().filter(|c| c.share_pct == top_share).cloned().collect();
    let b_top: Vec<CellResult> = b.iter().filter(|c| c.share_pct == top_share).cloned().collect();
    let rows = difference_rows(&a_top, &b_top, class_names)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "class_index",
        "class_name",
        "train_count",
        &format!("acc_{name_a}"),
        &format!("acc_{name_b}"),
        "delta",
    ])?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for row in &rows {
        w.write_record([
            row.class_index.to_string(),
            row.class_name.clone(),
            format!("{:.1}", row.sample_count),
            fmt(row.acc_a),
            fmt(row.acc_b),
            fmt(row.delta),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| SpectralError::Format(e.to_string()))?;
    let diff_path = out_dir.join("difference.csv");
    super::atomic_write(&diff_path, &bytes)?;

    let series = vec![
        (format!("{name_a} OA"), share_curve(&a, |c| c.test.oa)),
        (format!("{name_b} OA"), share_curve(&b, |c| c.test.oa)),
        (format!("{name_a} mIoU"), share_curve(&a, |c| c.test.miou)),
        (format!("{name_b} mIoU"), share_curve(&b, |c| c.test.miou)),
    ];
    let svg = svg_line_chart("Test metrics over training share", "share (%)", "metric", &series);
    let svg_path = out_dir.join("share_curves.svg");
    super::atomic_write(&svg_path, svg.as_bytes())?;
    Ok((diff_path, svg_path))
}
