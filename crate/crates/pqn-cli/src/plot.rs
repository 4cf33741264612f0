//! SVG line charts and tour drawings.

use std::path::Path;

use plotters::prelude::*;

const COLORS: [RGBColor; 4] = [RGBColor(31, 119, 180), RGBColor(214, 39, 40), RGBColor(44, 160, 44), RGBColor(148, 103, 189)];
const WINDOW_FILL: RGBColor = RGBColor(255, 228, 196);

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: &str, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.to_string(),
            points,
        }
    }
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 * lo.abs().max(1.0) };
    (lo - pad, hi + pad)
}

/// One chart per panel, stacked vertically; `window` shades an x interval on each.
pub fn panels(path: &Path, panels: &[(String, Vec<Series>)], x_desc: &str, window: Option<(f64, f64)>) -> Result<(), String> {
    let root = SVGBackend::new(path, (800, 260 * panels.len() as u32)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| e.to_string())?;
    for (area, (title, series)) in root.split_evenly((panels.len(), 1)).iter().zip(panels) {
        let (x0, x1) = span(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
        let (y0, y1) = span(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
        let mut chart = ChartBuilder::on(area)
            .caption(title, ("sans-serif", 18))
            .margin(10)
            .x_label_area_size(35)
            .y_label_area_size(60)
            .build_cartesian_2d(x0..x1, y0..y1)
            .map_err(|e| e.to_string())?;
        chart
            .configure_mesh()
            .x_desc(x_desc)
            .draw()
            .map_err(|e| e.to_string())?;
        if let Some((a, b)) = window {
            chart
                .draw_series(std::iter::once(Rectangle::new([(a, y0), (b, y1)], WINDOW_FILL.filled())))
                .map_err(|e| e.to_string())?
                .label("perturbed epochs")
                .legend(|(x, y)| Rectangle::new([(x, y - 5), (x + 20, y + 5)], WINDOW_FILL.filled()));
        }
        for (i, s) in series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            chart
                .draw_series(LineSeries::new(s.points.iter().copied(), color.stroke_width(2)))
                .map_err(|e| e.to_string())?
                .label(s.label.as_str())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(|e| e.to_string())?;
    }
    root.present().map_err(|e| e.to_string())
}

/// Cities as points and the closed tour as a polyline; the start city is highlighted.
pub fn tour(path: &Path, title: &str, coords: &[[f64; 2]], order: &[usize]) -> Result<(), String> {
    let root = SVGBackend::new(path, (600, 600)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| e.to_string())?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(15)
        .x_label_area_size(30)
        .y_label_area_size(40)
        .build_cartesian_2d(-0.05f64..1.05, -0.05f64..1.05)
        .map_err(|e| e.to_string())?;
    chart.configure_mesh().draw().map_err(|e| e.to_string())?;
    let mut line: Vec<(f64, f64)> = order.iter().map(|&c| (coords[c][0], coords[c][1])).collect();
    if let Some(&first) = line.first() {
        line.push(first);
    }
    chart
        .draw_series(LineSeries::new(line, COLORS[0].stroke_width(2)))
        .map_err(|e| e.to_string())?;
    chart
        .draw_series(coords.iter().map(|p| Circle::new((p[0], p[1]), 4, BLACK.filled())))
        .map_err(|e| e.to_string())?;
    if let Some(&s) = order.first() {
        chart
            .draw_series(std::iter::once(Circle::new((coords[s][0], coords[s][1]), 7, COLORS[1].filled())))
            .map_err(|e| e.to_string())?;
    }
    root.present().map_err(|e| e.to_string())
}
