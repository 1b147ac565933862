//! Loss-curve export and smoothing.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::error::{Error, IoContext, Result};
use crate::train::RunMetrics;

/// Trailing mean: entry `i` averages `values[i + 1 - window ..= i]`, or the
/// whole prefix while fewer than `window` values exist.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    assert!(window > 0, "moving average window must be positive");
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, &v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// One named loss series on a shared plot.
#[derive(Clone, Copy, Debug)]
pub struct LossSeries<'a> {
    pub label: &'a str,
    pub metrics: &'a RunMetrics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossCurveFiles {
    pub csv: PathBuf,
    pub image: PathBuf,
}

/// Writes `<stem>.csv` (one row per training iteration per series) and an SVG
/// line plot `<stem>.svg` with raw and smoothed loss for each series.
pub fn export_loss_curve(series: &[LossSeries<'_>], stem: &Path, window: usize) -> Result<LossCurveFiles> {
    if series.is_empty() {
        return Err(Error::Argument("no loss series to export".into()));
    }
    let losses: Vec<Vec<f64>> = series.iter().map(|s| s.metrics.train_losses()).collect();
    if let Some((s, _)) = series.iter().zip(&losses).find(|(_, l)| l.len() < 2) {
        return Err(Error::Argument(format!("series `{}` has fewer than 2 loss points", s.label)));
    }
    let smoothed: Vec<Vec<f64>> = losses.iter().map(|l| moving_average(l, window)).collect();

    let mut csv = String::from("series,iteration,loss,moving_average\n");
    for ((s, raw), avg) in series.iter().zip(&losses).zip(&smoothed) {
        for (i, (l, a)) in raw.iter().zip(avg).enumerate() {
            let _ = writeln!(csv, "{},{i},{l:.6},{a:.6}", s.label);
        }
    }
    let csv_path = stem.with_extension("csv");
    if let Some(dir) = stem.parent() {
        fs::create_dir_all(dir).at(dir)?;
    }
    fs::write(&csv_path, csv).at(&csv_path)?;

    let image = stem.with_extension("svg");
    render(&image, series, &losses, &smoothed, window).map_err(|e| Error::Io {
        path: image.clone(),
        source: std::io::Error::other(e.to_string()),
    })?;
    Ok(LossCurveFiles { csv: csv_path, image })
}

fn render(
    path: &Path,
    series: &[LossSeries<'_>],
    losses: &[Vec<f64>],
    smoothed: &[Vec<f64>],
    window: usize,
) -> std::result::Result<(), Box<dyn std::error::Error>> {
    let x_max = losses.iter().map(Vec::len).max().unwrap_or(2) as f64;
    let y_max = losses.iter().flatten().copied().filter(|v| v.is_finite()).fold(0.0f64, f64::max).max(1e-3) * 1.05;

    let root = SVGBackend::new(path, (900, 540)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Training loss", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(56)
        .build_cartesian_2d(0.0..x_max, 0.0..y_max)?;
    chart.configure_mesh().x_desc("iteration").y_desc("loss").draw()?;

    for (k, ((s, raw), avg)) in series.iter().zip(losses).zip(smoothed).enumerate() {
        let color = Palette99::pick(k);
        chart.draw_series(LineSeries::new(
            raw.iter().enumerate().map(|(i, &v)| (i as f64, v)),
            color.mix(0.25).stroke_width(1),
        ))?;
        chart
            .draw_series(LineSeries::new(
                avg.iter().enumerate().map(|(i, &v)| (i as f64, v)),
                color.stroke_width(2),
            ))?
            .label(format!("{} ({window}-iter mean)", s.label))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()?;
    root.present()?;
    Ok(())
}
