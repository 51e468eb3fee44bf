//! Minimal self-contained SVG figures: axes, polylines and markers.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Series {
    pub label: String,
    /// Drawn as a connected polyline.
    pub line: Vec<(f64, f64)>,
    /// Drawn as small circles.
    pub markers: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Figure {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(fig: &Figure) -> Frame {
        let pts = fig.series.iter().flat_map(|s| s.line.iter().chain(&s.markers)).filter(|p| p.0.is_finite() && p.1.is_finite());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (-1.0, 1.0, -1.0, 1.0);
        }
        let pad = |a: f64, b: f64| if b - a > 0.0 { 0.05 * (b - a) } else { 0.5 * a.abs().max(1.0) };
        let (px, py) = (pad(x0, x1), pad(y0, y1));
        Frame { x0: x0 - px, x1: x1 + px, y0: y0 - py, y1: y1 + py }
    }

    fn map(&self, (x, y): (f64, f64)) -> (f64, f64) {
        let sx = MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN);
        let sy = HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN);
        (sx, sy)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders the figure. Non-finite points break polylines.
pub fn render(fig: &Figure) -> String {
    let f = Frame::fit(fig);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(s, r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#, r - l, b - t);
    // zero axes when they fall inside the frame
    if f.x0 < 0.0 && f.x1 > 0.0 {
        let (x, _) = f.map((0.0, 0.0));
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{t}" x2="{x:.2}" y2="{b}" stroke="gray"/>"#);
    }
    if f.y0 < 0.0 && f.y1 > 0.0 {
        let (_, y) = f.map((0.0, 0.0));
        let _ = writeln!(s, r#"<line x1="{l}" y1="{y:.2}" x2="{r}" y2="{y:.2}" stroke="gray"/>"#);
    }
    let tick = |v: f64| format!("{v:.3}");
    let _ = writeln!(s, r#"<text x="{l}" y="{}" text-anchor="start">{}</text>"#, b + 16.0, tick(f.x0));
    let _ = writeln!(s, r#"<text x="{r}" y="{}" text-anchor="end">{}</text>"#, b + 16.0, tick(f.x1));
    let _ = writeln!(s, r#"<text x="{}" y="{b}" text-anchor="end">{}</text>"#, l - 4.0, tick(f.y0));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, l - 4.0, t + 10.0, tick(f.y1));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 10.0, escape(&fig.x_label));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(&fig.y_label)
    );
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(&fig.title));
    for (k, series) in fig.series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let _ = writeln!(s, r#"<g stroke="{color}" fill="none"><title>{}</title>"#, escape(&series.label));
        for run in series.line.split(|p| !(p.0.is_finite() && p.1.is_finite())) {
            if run.len() < 2 {
                continue;
            }
            let pts: Vec<String> = run.iter().map(|&p| f.map(p)).map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(s, r#"<polyline points="{}"/>"#, pts.join(" "));
        }
        for &p in series.markers.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
            let (x, y) = f.map(p);
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{color}"/>"#);
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_polylines_and_markers() {
        let fig = Figure {
            title: "a < b".into(),
            series: vec![Series {
                label: "s".into(),
                line: vec![(0.0, 0.0), (1.0, 1.0), (f64::NAN, 0.0), (2.0, 0.0), (3.0, 1.0)],
                markers: vec![(1.0, 1.0)],
            }],
            ..Default::default()
        };
        let svg = render(&fig);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg, render(&fig));
    }

    #[test]
    fn empty_figure_is_valid() {
        let svg = render(&Figure::default());
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }
}
