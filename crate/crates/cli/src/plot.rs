//! Static SVG plots.

use std::path::Path;

use plotters::prelude::*;

use ccrcnn::geomeval::{iou_thresholds, Detection};
use ccrcnn::trainer::EpochMetrics;
use ccrcnn::EvalReport;

fn err(e: impl std::fmt::Display) -> String {
    format!("plot: {e}")
}

pub fn metrics(path: &Path, metrics: &[EpochMetrics]) -> Result<(), String> {
    let root = SVGBackend::new(path, (720, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let n = metrics.len().max(1) as f64;
    let max_loss = metrics.iter().map(|m| m.loss).fold(1e-9, f64::max);
    let mut chart = ChartBuilder::on(&root)
        .margin(12)
        .x_label_area_size(30)
        .y_label_area_size(40)
        .build_cartesian_2d(0.0..n, 0.0..max_loss.max(1.0))
        .map_err(err)?;
    chart.configure_mesh().x_desc("epoch").draw().map_err(err)?;
    chart
        .draw_series(LineSeries::new(
            metrics.iter().map(|m| (m.epoch as f64, m.loss / max_loss)),
            &BLUE,
        ))
        .map_err(err)?
        .label("loss / max loss")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], BLUE));
    chart
        .draw_series(LineSeries::new(
            metrics
                .iter()
                .filter_map(|m| m.val_map.map(|v| (m.epoch as f64, v))),
            &RED,
        ))
        .map_err(err)?
        .label("val mAP")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], RED));
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .draw()
        .map_err(err)?;
    root.present().map_err(err)
}

pub fn pr_curves(path: &Path, report: &EvalReport) -> Result<(), String> {
    let root = SVGBackend::new(path, (520, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let mut chart = ChartBuilder::on(&root)
        .margin(12)
        .x_label_area_size(30)
        .y_label_area_size(40)
        .build_cartesian_2d(0.0..1.0, 0.0..1.05)
        .map_err(err)?;
    chart
        .configure_mesh()
        .x_desc("recall")
        .y_desc("precision")
        .draw()
        .map_err(err)?;
    for (i, (curve, tau)) in report.pr_curves.iter().zip(iou_thresholds()).enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(curve.iter().copied(), color))
            .map_err(err)?
            .label(format!("IoU {tau:.2}"))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .draw()
        .map_err(err)?;
    root.present().map_err(err)
}

/// Waveform of `region` (decimated to at most 4000 points) with detections
/// shaded by score.
pub fn detections(
    path: &Path,
    waveform: &[f32],
    region: (usize, usize),
    dets: &[Detection],
) -> Result<(), String> {
    let (start, end) = region;
    let slice = &waveform[start..end];
    let peak = slice.iter().fold(1e-6f32, |m, v| m.max(v.abs())) as f64;
    let root = SVGBackend::new(path, (1200, 360)).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let mut chart = ChartBuilder::on(&root)
        .margin(12)
        .x_label_area_size(30)
        .y_label_area_size(50)
        .build_cartesian_2d(start as f64..end as f64, -peak..peak)
        .map_err(err)?;
    chart
        .configure_mesh()
        .x_desc("sample")
        .draw()
        .map_err(err)?;
    chart
        .draw_series(dets.iter().map(|d| {
            let c = RED.mix(0.1 + 0.3 * d.score.clamp(0.0, 1.0));
            Rectangle::new(
                [
                    (d.interval.begin as f64, -peak),
                    (d.interval.end as f64, peak),
                ],
                c.filled(),
            )
        }))
        .map_err(err)?;
    let step = (slice.len() / 4000).max(1);
    chart
        .draw_series(LineSeries::new(
            slice
                .iter()
                .enumerate()
                .step_by(step)
                .map(|(i, &v)| ((start + i) as f64, f64::from(v))),
            &BLACK,
        ))
        .map_err(err)?;
    root.present().map_err(err)
}
