//! Percentile ribbon plot over generations, as a standalone SVG.

use std::fmt::Write as _;
use std::path::Path;

use super::{GenerationStats, Metric};
use crate::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 45.0;

/// (lower, upper) percentile indices and band opacity, widest first.
const BANDS: [(usize, usize, f64); 3] = [(0, 6, 0.15), (1, 5, 0.25), (2, 4, 0.4)];

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn x(&self, g: f64) -> f64 {
        let span = (self.x1 - self.x0).max(1.0);
        MARGIN_LEFT + (g - self.x0) / span * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    /// Infinite values are pinned to the top or bottom edge.
    fn y(&self, v: f64) -> f64 {
        let v = v.clamp(self.y0, self.y1);
        let span = self.y1 - self.y0;
        HEIGHT - MARGIN_BOTTOM - (v - self.y0) / span * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

/// Renders the median of `metric` with shaded 25–75, 10–90 and 5–95 bands.
pub fn render_percentile_plot(stats: &[GenerationStats], metric: Metric, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, svg(stats, metric)).map_err(|e| Error::io(path, e))
}

fn svg(stats: &[GenerationStats], metric: Metric) -> String {
    let pts: Vec<(f64, [f64; 7])> = stats
        .iter()
        .map(|s| (s.generation as f64, s.metric(metric).percentiles))
        .collect();
    let finite = pts.iter().flat_map(|(_, p)| p.iter().copied()).filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (mut y0, mut y1) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
    if y1 - y0 < 1e-9 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad = 0.05 * (y1 - y0);
    let frame = Frame {
        x0: pts.first().map_or(0.0, |p| p.0),
        x1: pts.last().map_or(1.0, |p| p.0),
        y0: y0 - pad,
        y1: y1 + pad,
    };

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        metric.name()
    );

    for (a, b, opacity) in BANDS {
        // Undefined generations (all-NaN) are skipped.
        let defined: Vec<&(f64, [f64; 7])> = pts.iter().filter(|(_, p)| !p[a].is_nan() && !p[b].is_nan()).collect();
        if defined.is_empty() {
            continue;
        }
        let mut poly = String::new();
        for (g, p) in &defined {
            let _ = write!(poly, "{:.2},{:.2} ", frame.x(*g), frame.y(p[b]));
        }
        for (g, p) in defined.iter().rev() {
            let _ = write!(poly, "{:.2},{:.2} ", frame.x(*g), frame.y(p[a]));
        }
        let _ = writeln!(
            out,
            r#"<polygon points="{}" fill="steelblue" fill-opacity="{opacity}" stroke="none"/>"#,
            poly.trim_end()
        );
    }

    let median: Vec<String> = pts
        .iter()
        .filter(|(_, p)| !p[3].is_nan())
        .map(|(g, p)| format!("{:.2},{:.2}", frame.x(*g), frame.y(p[3])))
        .collect();
    if !median.is_empty() {
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="navy" stroke-width="2"/>"#,
            median.join(" ")
        );
    }

    let (left, right) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (top, bottom) = (MARGIN_TOP, HEIGHT - MARGIN_BOTTOM);
    let _ = writeln!(
        out,
        r#"<path d="M{left},{top} L{left},{bottom} L{right},{bottom}" fill="none" stroke="black"/>"#
    );
    for (v, y) in [(frame.y0, bottom), (frame.y1, top)] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{:.3}</text>"#,
            left - 5.0,
            y + 4.0,
            v
        );
    }
    for (g, x) in [(frame.x0, left), (frame.x1, right)] {
        let _ = writeln!(
            out,
            r#"<text x="{x}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{g}</text>"#,
            bottom + 15.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">generation</text>"#,
        (left + right) / 2.0,
        HEIGHT - 8.0
    );
    out.push_str("</svg>\n");
    out
}
