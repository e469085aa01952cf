//! PNG learning curves, extrema plot and confusion heat maps.
//!
//! Text needs a TrueType font. One is looked up once, first from
//! `TLVISION_FONT` and then from a few common system locations. Without a
//! font the same charts are drawn with no captions, tick labels or legends.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use plotters::prelude::*;
use plotters::style::FontStyle;

use super::evaluation::ConfusionMatrix;
use crate::error::{Error, Result};
use crate::train::{Phase, TrainingHistory};

pub const FONT_ENV: &str = "TLVISION_FONT";
pub const MINMAX_FILE: &str = "minmax.png";

const FONT_FAMILY: &str = "sans-serif";
const FONT_CANDIDATES: [&str; 5] = [
    "/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf",
    "/usr/share/fonts/TTF/DejaVuSans.ttf",
    "/usr/share/fonts/dejavu/DejaVuSans.ttf",
    "/System/Library/Fonts/Supplemental/Arial.ttf",
    "C:\\Windows\\Fonts\\arial.ttf",
];
const SIZE: (u32, u32) = (800, 600);

fn font_available() -> bool {
    static FONT: OnceLock<bool> = OnceLock::new();
    *FONT.get_or_init(|| {
        let env = std::env::var_os(FONT_ENV).map(PathBuf::from);
        for path in env.into_iter().chain(FONT_CANDIDATES.iter().map(PathBuf::from)) {
            if let Ok(bytes) = std::fs::read(&path) {
                let bytes: &'static [u8] = Box::leak(bytes.into_boxed_slice());
                if plotters::style::register_font(FONT_FAMILY, FontStyle::Normal, bytes).is_ok() {
                    return true;
                }
            }
        }
        log::warn!("no usable font found; plots are rendered without text");
        false
    })
}

fn plot_err(e: impl std::fmt::Display) -> Error {
    Error::Plot(e.to_string())
}

pub fn curve_file(metric: &str) -> String {
    format!("curve_{metric}.png")
}

pub fn confusion_file(split: &str) -> String {
    format!("confusion_{split}.png")
}

fn value_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.08).max(1e-3);
    (lo - pad, hi + pad)
}

fn points(history: &TrainingHistory, key: &str) -> Vec<(f64, f64)> {
    history
        .records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.metrics.get(key).map(|&v| (i as f64, v)))
        .filter(|(_, v)| v.is_finite())
        .collect()
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// One `curve_<metric>.png` per metric with the train and validation series.
/// Epochs run across both phases; a grey vertical line marks where the warm
/// phase ends.
pub fn render_curves(history: &TrainingHistory, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if history.is_empty() {
        return Err(Error::Plot("history is empty".into()));
    }
    ensure_dir(out_dir)?;
    let text = font_available();
    let warm = history.epochs(Phase::Warm);
    let n = history.len();
    let mut out = Vec::new();
    for metric in history.metric_names() {
        let path = out_dir.join(curve_file(&metric));
        let train = points(history, &metric);
        let val = points(history, &format!("val_{metric}"));
        let (lo, hi) = value_range(train.iter().chain(&val).map(|p| p.1));
        {
            let root = BitMapBackend::new(&path, SIZE).into_drawing_area();
            root.fill(&WHITE).map_err(plot_err)?;
            let mut builder = ChartBuilder::on(&root);
            builder.margin(16);
            if text {
                builder
                    .caption(&metric, (FONT_FAMILY, 24))
                    .x_label_area_size(40)
                    .y_label_area_size(60);
            }
            let x_max = (n.max(2) - 1) as f64;
            let mut chart = builder
                .build_cartesian_2d(0f64..x_max, lo..hi)
                .map_err(plot_err)?;
            let mut mesh = chart.configure_mesh();
            if text {
                mesh.x_desc("epoch").y_desc(metric.as_str());
            } else {
                mesh.x_labels(0).y_labels(0);
            }
            mesh.draw().map_err(plot_err)?;
            if warm > 0 && warm < n {
                let x = warm as f64 - 0.5;
                chart
                    .draw_series(LineSeries::new([(x, lo), (x, hi)], BLACK.mix(0.4)))
                    .map_err(plot_err)?;
            }
            let train_series = chart
                .draw_series(LineSeries::new(train, BLUE.stroke_width(2)))
                .map_err(plot_err)?;
            if text {
                train_series
                    .label("train")
                    .legend(|(x, y)| PathElement::new([(x, y), (x + 20, y)], BLUE));
            }
            if !val.is_empty() {
                let val_series = chart
                    .draw_series(LineSeries::new(val, RED.stroke_width(2)))
                    .map_err(plot_err)?;
                if text {
                    val_series
                        .label("validation")
                        .legend(|(x, y)| PathElement::new([(x, y), (x + 20, y)], RED));
                }
            }
            if text {
                chart
                    .configure_series_labels()
                    .background_style(WHITE.mix(0.8))
                    .border_style(BLACK)
                    .draw()
                    .map_err(plot_err)?;
            }
            root.present().map_err(plot_err)?;
        }
        out.push(path);
    }
    Ok(out)
}

/// Extremum of a series: `(epoch, value)` of the first minimum and first
/// maximum.
pub fn extrema(series: &[f64]) -> Option<((usize, f64), (usize, f64))> {
    let mut it = series.iter().copied().enumerate().filter(|(_, v)| v.is_finite());
    let first = it.next()?;
    let (mut min, mut max) = (first, first);
    for (i, v) in it {
        if v < min.1 {
            min = (i, v);
        }
        if v > max.1 {
            max = (i, v);
        }
    }
    Some((min, max))
}

/// `minmax.png`: one panel per metric showing the validation series (train
/// when no validation stream exists) with its minimum and maximum marked.
pub fn render_minmax(history: &TrainingHistory, out_dir: &Path) -> Result<PathBuf> {
    if history.is_empty() {
        return Err(Error::Plot("history is empty".into()));
    }
    ensure_dir(out_dir)?;
    let text = font_available();
    let metrics = history.metric_names();
    let path = out_dir.join(MINMAX_FILE);
    {
        let height = 300 * metrics.len() as u32;
        let root = BitMapBackend::new(&path, (SIZE.0, height)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let panels = root.split_evenly((metrics.len(), 1));
        for (metric, panel) in metrics.iter().zip(panels) {
            let val_key = format!("val_{metric}");
            let key = if history.records.iter().any(|r| r.metrics.contains_key(&val_key)) {
                val_key
            } else {
                metric.clone()
            };
            let series: Vec<f64> = history
                .records
                .iter()
                .map(|r| r.metrics.get(&key).copied().unwrap_or(f64::NAN))
                .collect();
            let (lo, hi) = value_range(series.iter().copied());
            let mut builder = ChartBuilder::on(&panel);
            builder.margin(12);
            if text {
                builder
                    .caption(&key, (FONT_FAMILY, 18))
                    .x_label_area_size(30)
                    .y_label_area_size(60);
            }
            let x_max = (series.len().max(2) - 1) as f64;
            let mut chart = builder
                .build_cartesian_2d(0f64..x_max, lo..hi)
                .map_err(plot_err)?;
            let mut mesh = chart.configure_mesh();
            if !text {
                mesh.x_labels(0).y_labels(0);
            }
            mesh.draw().map_err(plot_err)?;
            let pts: Vec<(f64, f64)> = series
                .iter()
                .enumerate()
                .filter(|(_, v)| v.is_finite())
                .map(|(i, &v)| (i as f64, v))
                .collect();
            chart
                .draw_series(LineSeries::new(pts, BLUE.stroke_width(2)))
                .map_err(plot_err)?;
            if let Some((min, max)) = extrema(&series) {
                for ((epoch, value), color, tag) in [(min, GREEN, "min"), (max, RED, "max")] {
                    let at = (epoch as f64, value);
                    chart
                        .draw_series([Circle::new(at, 6, color.filled())])
                        .map_err(plot_err)?;
                    if text {
                        chart
                            .draw_series([Text::new(
                                format!("{tag} {value:.4} @ {epoch}"),
                                at,
                                (FONT_FAMILY, 14).into_font(),
                            )])
                            .map_err(plot_err)?;
                    }
                }
            }
        }
        root.present().map_err(plot_err)?;
    }
    Ok(path)
}

/// `confusion_<split>.png`: cells shaded by the row-normalized count.
pub fn render_confusion(
    matrix: &ConfusionMatrix,
    class_names: &[String],
    split: &str,
    out_dir: &Path,
) -> Result<PathBuf> {
    ensure_dir(out_dir)?;
    let text = font_available();
    let k = matrix.k().max(1) as i32;
    let path = out_dir.join(confusion_file(split));
    {
        let root = BitMapBackend::new(&path, (640, 640)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut builder = ChartBuilder::on(&root);
        builder.margin(16);
        if text {
            builder
                .caption(format!("confusion ({split})"), (FONT_FAMILY, 22))
                .x_label_area_size(40)
                .y_label_area_size(80);
        }
        let mut chart = builder
            .build_cartesian_2d(0..k, 0..k)
            .map_err(plot_err)?;
        let x_names = |j: &i32| class_names.get(*j as usize).cloned().unwrap_or_default();
        let y_names = |i: &i32| {
            let row = k - 1 - *i;
            class_names.get(row as usize).cloned().unwrap_or_default()
        };
        let mut mesh = chart.configure_mesh();
        mesh.disable_mesh();
        if text {
            mesh.x_desc("predicted")
                .y_desc("true")
                .x_labels(k as usize)
                .y_labels(k as usize)
                .x_label_formatter(&x_names)
                .y_label_formatter(&y_names);
        } else {
            mesh.x_labels(0).y_labels(0);
        }
        mesh.draw().map_err(plot_err)?;
        let rows = matrix.row_sums();
        for (i, row) in matrix.counts.iter().enumerate() {
            for (j, &count) in row.iter().enumerate() {
                let share = if rows[i] == 0 { 0.0 } else { count as f64 / rows[i] as f64 };
                let shade = (255.0 * (1.0 - share)) as u8;
                let y = k - 1 - i as i32;
                let x = j as i32;
                chart
                    .draw_series([Rectangle::new(
                        [(x, y), (x + 1, y + 1)],
                        RGBColor(shade, shade, 255).filled(),
                    )])
                    .map_err(plot_err)?;
                if text {
                    chart
                        .draw_series([Text::new(
                            count.to_string(),
                            (x, y + 1),
                            (FONT_FAMILY, 20).into_font(),
                        )])
                        .map_err(plot_err)?;
                }
            }
        }
        root.present().map_err(plot_err)?;
    }
    Ok(path)
}
