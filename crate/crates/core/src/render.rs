//! Scatter-plus-curve SVG plots of fitted models.

use std::fmt::Write as _;

use crate::fitting::Curve;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;
pub const CURVE_POINTS: usize = 200;

const LEFT: f64 = 80.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 70.0;
const TICKS: usize = 5;

#[derive(Debug, Clone, Default)]
pub struct PlotLabels {
    pub title: String,
    pub x: String,
    pub y: String,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn fmt_tick(v: f64, span: f64) -> String {
    let decimals = if span >= 50.0 {
        0
    } else if span >= 5.0 {
        1
    } else if span >= 0.5 {
        2
    } else {
        4
    };
    format!("{v:.decimals$}")
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn widen(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        (lo - pad, hi + pad)
    }
}

/// Renders `(x, y)` samples as blue dots and `model` as a red polyline of
/// [`CURVE_POINTS`] vertices over `[0, 1.05·max x]`.
///
/// With no samples the curve spans `[0, 1]` and a warning is printed on the
/// canvas. Axis ranges always include every sample.
pub fn emit_scatter<M: Curve>(samples: &[(f64, f64)], model: &M, labels: &PlotLabels) -> String {
    let finite: Vec<(f64, f64)> = samples
        .iter()
        .copied()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    let max_x = finite.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let x_end = if finite.is_empty() || max_x <= 0.0 { 1.0 } else { 1.05 * max_x };
    let curve: Vec<(f64, f64)> = (0..CURVE_POINTS)
        .map(|i| {
            let x = x_end * i as f64 / (CURVE_POINTS - 1) as f64;
            (x, model.value(x))
        })
        .filter(|(_, y)| y.is_finite())
        .collect();

    let all = finite.iter().chain(&curve);
    let (mut x0, mut x1, mut y0, mut y1) = (0.0f64, x_end, 0.0f64, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !y1.is_finite() {
        y1 = 1.0;
    }
    let (x0, x1) = widen(x0, x1);
    let (y0, y1) = widen(y0, y1 * 1.05);
    let f = Frame { x0, x1, y0, y1 };

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="30" font-size="18" text-anchor="middle" font-family="sans-serif">{}</text>"#,
        WIDTH / 2.0,
        escape(&labels.title)
    );

    // axes
    let (ax0, ax1) = (f.px(x0), f.px(x1));
    let (ay0, ay1) = (f.py(y0), f.py(y1));
    let _ = writeln!(
        s,
        r#"<path d="M{ax0:.2},{ay1:.2} L{ax0:.2},{ay0:.2} L{ax1:.2},{ay0:.2}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    for i in 0..=TICKS {
        let t = i as f64 / TICKS as f64;
        let xv = x0 + t * (x1 - x0);
        let yv = y0 + t * (y1 - y0);
        let (tx, ty) = (f.px(xv), f.py(yv));
        let _ = writeln!(
            s,
            r#"<line x1="{tx:.2}" y1="{ay0:.2}" x2="{tx:.2}" y2="{:.2}" stroke="black"/><text x="{tx:.2}" y="{:.2}" font-size="12" text-anchor="middle" font-family="sans-serif">{}</text>"#,
            ay0 + 5.0,
            ay0 + 20.0,
            fmt_tick(xv, x1 - x0)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{ty:.2}" x2="{ax0:.2}" y2="{ty:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" font-size="12" text-anchor="end" font-family="sans-serif">{}</text>"#,
            ax0 - 5.0,
            ax0 - 8.0,
            ty + 4.0,
            fmt_tick(yv, y1 - y0)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="14" text-anchor="middle" font-family="sans-serif">{}</text>"#,
        (ax0 + ax1) / 2.0,
        HEIGHT - 20.0,
        escape(&labels.x)
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" font-size="14" text-anchor="middle" font-family="sans-serif" transform="rotate(-90 20 {:.2})">{}</text>"#,
        (ay0 + ay1) / 2.0,
        (ay0 + ay1) / 2.0,
        escape(&labels.y)
    );

    let _ = writeln!(s, r##"<g fill="#1f4fd1" fill-opacity="0.7">"##);
    for &(x, y) in &finite {
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3"/>"#, f.px(x), f.py(y));
    }
    let _ = writeln!(s, "</g>");

    let pts: Vec<String> = curve
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
        .collect();
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#d11f1f" stroke-width="2"/>"##,
        pts.join(" ")
    );
    if finite.is_empty() {
        let _ = writeln!(
            s,
            r##"<text x="{:.2}" y="{:.2}" font-size="14" text-anchor="middle" fill="#b00000" font-family="sans-serif">warning: no samples to plot</text>"##,
            WIDTH / 2.0,
            TOP + 20.0
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitting::ExponentialModel;

    fn polyline(svg: &str) -> Vec<(f64, f64)> {
        let start = svg.find("<polyline points=\"").unwrap() + 18;
        let end = start + svg[start..].find('"').unwrap();
        svg[start..end]
            .split(' ')
            .map(|p| {
                let (a, b) = p.split_once(',').unwrap();
                (a.parse().unwrap(), b.parse().unwrap())
            })
            .collect()
    }

    #[test]
    fn constant_model_draws_horizontal_line() {
        let svg = emit_scatter(
            &[(1.0, 2.0), (2.0, 3.0), (3.0, 1.0)],
            &ExponentialModel { a: 2.0, b: 0.0 },
            &PlotLabels::default(),
        );
        let pts = polyline(&svg);
        assert_eq!(pts.len(), CURVE_POINTS);
        assert!(pts.iter().all(|p| p.1 == pts[0].1));
        assert_eq!(svg.matches("<circle").count(), 3);
    }

    #[test]
    fn markers_inside_plot_area() {
        let samples = [(0.0, 0.0), (10.0, 500.0), (-2.0, -1.0)];
        let svg = emit_scatter(&samples, &ExponentialModel { a: 1.0, b: 0.1 }, &PlotLabels::default());
        for line in svg.lines().filter(|l| l.starts_with("<circle")) {
            let num = |key: &str| -> f64 {
                let i = line.find(key).unwrap() + key.len();
                line[i..i + line[i..].find('"').unwrap()].parse().unwrap()
            };
            let (cx, cy) = (num("cx=\""), num("cy=\""));
            assert!((LEFT - 1e-9..=WIDTH - RIGHT + 1e-9).contains(&cx), "{line}");
            assert!((TOP - 1e-9..=HEIGHT - BOTTOM + 1e-9).contains(&cy), "{line}");
        }
    }

    #[test]
    fn empty_samples_warn() {
        let svg = emit_scatter(&[], &ExponentialModel { a: 1.0, b: 1.0 }, &PlotLabels::default());
        assert!(svg.contains("warning: no samples"));
        assert_eq!(polyline(&svg).len(), CURVE_POINTS);
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn labels_are_escaped() {
        let labels = PlotLabels { title: "a<b & c".into(), ..Default::default() };
        let svg = emit_scatter(&[(1.0, 1.0)], &ExponentialModel { a: 1.0, b: 0.0 }, &labels);
        assert!(svg.contains("a&lt;b &amp; c"));
    }
}
