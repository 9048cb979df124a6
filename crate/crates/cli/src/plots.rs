//! Static SVG box plots and trace plots.

use bnpirt::diagnostics::{ParameterSummary, TraceRow};
use std::fmt::Write;

/// Most points drawn per trace polyline.
pub const MAX_TRACE_POINTS: usize = 5_000;

const FONT: &str = "font-family=\"sans-serif\" font-size=\"10\"";

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Scale {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl Scale {
    fn new(lo: f64, hi: f64, px_lo: f64, px_hi: f64) -> Self {
        let (lo, hi) = if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        };
        Self {
            lo,
            hi,
            px_lo,
            px_hi,
        }
    }

    fn map(&self, v: f64) -> f64 {
        self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }
}

/// One horizontal box per parameter: whiskers at min and max, box over the
/// interquartile range, a bar at the median.
pub fn box_plot(params: &[&ParameterSummary], title: &str) -> String {
    let row_h = 14.0;
    let left = 130.0;
    let width = 760.0;
    let top = 30.0;
    let height = top + row_h * params.len().max(1) as f64 + 30.0;
    let lo = params.iter().map(|p| p.min).fold(f64::INFINITY, f64::min);
    let hi = params
        .iter()
        .map(|p| p.max)
        .fold(f64::NEG_INFINITY, f64::max);
    let x = Scale::new(
        if lo.is_finite() { lo } else { 0.0 },
        if hi.is_finite() { hi } else { 1.0 },
        left,
        width - 20.0,
    );

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height:.0}\">"
    );
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{left}\" y=\"16\" {FONT}>{}</text>",
        escape(title)
    );
    let axis_y = height - 24.0;
    let _ = writeln!(
        s,
        "<line x1=\"{left}\" y1=\"{axis_y}\" x2=\"{:.2}\" y2=\"{axis_y}\" stroke=\"black\"/>",
        width - 20.0
    );
    for k in 0..=4 {
        let v = x.lo + (x.hi - x.lo) * k as f64 / 4.0;
        let px = x.map(v);
        let _ = writeln!(
            s,
            "<text x=\"{px:.2}\" y=\"{:.2}\" {FONT} text-anchor=\"middle\">{v:.3}</text>",
            axis_y + 14.0
        );
    }
    for (k, p) in params.iter().enumerate() {
        let cy = top + row_h * (k as f64 + 0.5);
        let [_, q1, med, q3, _] = p.quantiles;
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" {FONT} text-anchor=\"end\">{}</text>",
            left - 6.0,
            cy + 3.0,
            escape(&p.name)
        );
        let _ = writeln!(
            s,
            "<line x1=\"{:.2}\" y1=\"{cy:.2}\" x2=\"{:.2}\" y2=\"{cy:.2}\" stroke=\"gray\"/>",
            x.map(p.min),
            x.map(p.max)
        );
        let _ = writeln!(
            s,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#cfe0f3\" stroke=\"#1f4e79\"/>",
            x.map(q1),
            cy - row_h * 0.35,
            (x.map(q3) - x.map(q1)).max(0.5),
            row_h * 0.7
        );
        let _ = writeln!(
            s,
            "<line x1=\"{m:.2}\" y1=\"{:.2}\" x2=\"{m:.2}\" y2=\"{:.2}\" stroke=\"#1f4e79\" stroke-width=\"2\"/>",
            cy - row_h * 0.35,
            cy + row_h * 0.35,
            m = x.map(med)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Indices kept when thinning `n` points down to at most [`MAX_TRACE_POINTS`].
pub fn downsample(n: usize) -> Vec<usize> {
    let stride = n.div_ceil(MAX_TRACE_POINTS).max(1);
    (0..n).step_by(stride).collect()
}

/// One stacked panel per parameter of a long-format trace.
pub fn trace_plot(rows: &[TraceRow]) -> String {
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.parameter.as_str()) {
            names.push(&r.parameter);
        }
    }
    let panel_h = 90.0;
    let width = 900.0;
    let left = 130.0;
    let height = 20.0 + panel_h * names.len().max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height:.0}\">"
    );
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    for (k, name) in names.iter().enumerate() {
        let series: Vec<(usize, f64)> = rows
            .iter()
            .filter(|r| r.parameter == *name)
            .filter_map(|r| r.value.map(|v| (r.draw, v)))
            .collect();
        let y0 = 10.0 + panel_h * k as f64;
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" {FONT} text-anchor=\"end\">{}</text>",
            left - 6.0,
            y0 + panel_h / 2.0,
            escape(name)
        );
        let _ = writeln!(
            s,
            "<rect x=\"{left}\" y=\"{y0:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#999\"/>",
            width - left - 10.0,
            panel_h - 10.0
        );
        if series.is_empty() {
            continue;
        }
        let lo = series.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let hi = series.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let last = series.last().unwrap().0.max(1) as f64;
        let x = Scale::new(0.0, last, left, width - 10.0);
        let y = Scale::new(lo, hi, y0 + panel_h - 12.0, y0 + 2.0);
        let mut points = String::new();
        for i in downsample(series.len()) {
            let (d, v) = series[i];
            let _ = write!(points, "{:.2},{:.2} ", x.map(d as f64), y.map(v));
        }
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"#1f4e79\" stroke-width=\"0.6\" points=\"{}\"/>",
            points.trim_end()
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" {FONT}>{hi:.4}</text>",
            width - 80.0,
            y0 + 10.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" {FONT}>{lo:.4}</text>",
            width - 80.0,
            y0 + panel_h - 14.0
        );
    }
    s.push_str("</svg>\n");
    s
}
