//! Minimal static SVG rendering of a chart spec, for headless summaries.

use std::fmt::Write;

use super::{AggregateMark, ChartKind, ChartSpec, Point};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const PAD: f64 = 40.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(xs: impl IntoIterator<Item = f64>, ys: impl IntoIterator<Item = f64>) -> Self {
        let span = |vals: Vec<f64>| {
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            match (lo.is_finite(), hi > lo) {
                (true, true) => (lo, hi),
                (true, false) => (lo - 0.5, lo + 0.5),
                _ => (0.0, 1.0),
            }
        };
        let (x0, x1) = span(xs.into_iter().filter(|v| v.is_finite()).collect());
        let (y0, y1) = span(ys.into_iter().filter(|v| v.is_finite()).collect());
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        PAD + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * PAD)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - PAD - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * PAD)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders `spec` as an SVG document. With `unfold` set, fold marks and
/// unfold regions are drawn behind the aggregate marks.
pub fn render_svg(spec: &ChartSpec, unfold: bool) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<desc>{} {:?}</desc>"#, spec.schema, spec.chart_kind);
    match spec.chart_kind {
        ChartKind::Bar => bars(&mut out, spec, unfold),
        ChartKind::ScatterRegression => scatter(&mut out, spec, unfold),
        ChartKind::Bubble => bubbles(&mut out, spec, unfold),
    }
    out.push_str("</svg>\n");
    out
}

fn bars(out: &mut String, spec: &ChartSpec, unfold: bool) {
    let heights = spec.marks.iter().flat_map(|m| {
        std::iter::once(m.channels.y)
            .chain(m.fold_marks.iter().map(|f| f.channels.y))
            .flatten()
            .chain([0.0])
    });
    let frame = Frame::fit([-0.5, spec.marks.len() as f64 - 0.5], heights.collect::<Vec<_>>());
    let slot = (WIDTH - 2.0 * PAD) / spec.marks.len().max(1) as f64;
    for (i, m) in spec.marks.iter().enumerate() {
        let cx = frame.px(i as f64);
        let left = cx - slot * 0.35;
        let base = frame.py(0.0);
        match m.channels.y {
            Some(y) => {
                let top = frame.py(y);
                let _ = writeln!(
                    out,
                    r##"<rect x="{left:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="#4a78b0"><title>{}</title></rect>"##,
                    top.min(base),
                    slot * 0.7,
                    (base - top).abs(),
                    escape(&m.label)
                );
            }
            None => undefined_marker(out, left, base - 12.0, slot * 0.7, m),
        }
        if unfold {
            for f in &m.fold_marks {
                if let Some(y) = f.channels.y {
                    let py = frame.py(y);
                    let _ = writeln!(
                        out,
                        r##"<line x1="{left:.3}" y1="{py:.3}" x2="{:.3}" y2="{py:.3}" stroke="#d03030" stroke-width="1"/>"##,
                        left + slot * 0.7
                    );
                }
            }
        }
    }
}

fn undefined_marker(out: &mut String, x: f64, y: f64, w: f64, m: &AggregateMark) {
    let _ = writeln!(
        out,
        r##"<rect x="{x:.3}" y="{y:.3}" width="{w:.3}" height="12" fill="#bbbbbb"><title>{}: {}</title></rect>"##,
        escape(&m.label),
        escape(m.reason.as_deref().unwrap_or("undefined"))
    );
}

fn scatter(out: &mut String, spec: &ChartSpec, unfold: bool) {
    let pts: Vec<Point> = spec.marks.iter().flat_map(|m| m.points.iter().copied()).collect();
    let frame = Frame::fit(
        pts.iter().map(|p| p[0]).collect::<Vec<_>>(),
        pts.iter().map(|p| p[1]).collect::<Vec<_>>(),
    );
    let line = |out: &mut String, slope: f64, intercept: f64, color: &str, width: f64| {
        let (a, b) = (frame.x0, frame.x1);
        let _ = writeln!(
            out,
            r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="{color}" stroke-width="{width}"/>"#,
            frame.px(a),
            frame.py(slope * a + intercept),
            frame.px(b),
            frame.py(slope * b + intercept)
        );
    };
    for m in &spec.marks {
        for p in &m.points {
            let _ = writeln!(
                out,
                r##"<circle cx="{:.3}" cy="{:.3}" r="2" fill="#888888"/>"##,
                frame.px(p[0]),
                frame.py(p[1])
            );
        }
        if unfold {
            for f in &m.fold_marks {
                if let Some(l) = f.line {
                    line(out, l.slope, l.intercept, "#d03030", 1.0);
                }
            }
        }
        if let Some(l) = m.line {
            line(out, l.slope, l.intercept, "#2050c0", 2.0);
        }
    }
}

fn bubbles(out: &mut String, spec: &ChartSpec, unfold: bool) {
    let frame = Frame {
        x0: 0.0,
        x1: 1.0,
        y0: 0.0,
        y1: 1.0,
    };
    for m in &spec.marks {
        let (Some(x), Some(y)) = (m.channels.x, m.channels.y) else {
            continue;
        };
        if unfold {
            if let Some(region) = &m.unfold_region {
                let pts: Vec<String> = region
                    .iter()
                    .map(|p| format!("{:.3},{:.3}", frame.px(p[0]), frame.py(p[1])))
                    .collect();
                let _ = writeln!(
                    out,
                    r##"<polygon points="{}" fill="none" stroke="#555555" stroke-dasharray="4 3"/>"##,
                    pts.join(" ")
                );
            }
        }
        let fill = match m.channels.color.as_deref() {
            Some("positive") => "#3a8f3a",
            Some("negative") => "#c04040",
            _ => "#999999",
        };
        let r = 4.0 + 30.0 * m.channels.size.unwrap_or(0.0);
        let stroke = if m.significant == Some(true) {
            r##" stroke="#000000" stroke-width="2""##
        } else {
            ""
        };
        let _ = writeln!(
            out,
            r#"<circle cx="{:.3}" cy="{:.3}" r="{r:.3}" fill="{fill}" fill-opacity="0.7"{stroke}><title>{}</title></circle>"#,
            frame.px(x),
            frame.py(y),
            escape(&m.label)
        );
    }
}
