//! Minimal self-contained SVG charts.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: &'static str,
    pub opacity: f64,
    pub width: f64,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>, color: &'static str) -> Self {
        Self {
            label: label.into(),
            points,
            color,
            opacity: 1.0,
            width: 2.0,
        }
    }

    pub fn faint(mut self) -> Self {
        self.opacity = 0.25;
        self.width = 1.0;
        self.label.clear();
        self
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Axes {
    pub log_x: bool,
    pub log_y: bool,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        W / 2.0,
        escape(title)
    )
}

/// Linear map from data range to pixel range.
struct Scale {
    lo: f64,
    hi: f64,
    a: f64,
    b: f64,
}

impl Scale {
    fn new(lo: f64, hi: f64, a: f64, b: f64) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        Self { lo, hi, a, b }
    }

    fn at(&self, v: f64) -> f64 {
        self.a + (v - self.lo) / (self.hi - self.lo) * (self.b - self.a)
    }
}

fn transform(v: f64, log: bool) -> Option<f64> {
    let t = if log { v.max(1.0).log10() } else { v };
    t.is_finite().then_some(t)
}

fn transform_y(v: f64, log: bool) -> Option<f64> {
    if log {
        (v > 0.0).then(|| v.log10()).filter(|t| t.is_finite())
    } else {
        v.is_finite().then_some(v)
    }
}

fn ticks(lo: f64, hi: f64, log: bool) -> Vec<(f64, String)> {
    if log {
        let (a, b) = (lo.floor() as i32, hi.ceil() as i32);
        return (a..=b)
            .map(|e| (e as f64, format!("1e{e}")))
            .filter(|(t, _)| *t >= lo - 1e-9 && *t <= hi + 1e-9)
            .collect();
    }
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let mut out = Vec::new();
    let mut t = (lo / step).ceil() * step;
    while t <= hi + 1e-9 * span {
        out.push((t, format!("{}", (t / step).round() * step)));
        t += step;
    }
    out
}

/// Curves on shared axes; a log x axis clamps step 0 to 1.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, axes: Axes, series: &[Series]) -> String {
    let pts: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .filter_map(|&(x, y)| Some((transform(x, axes.log_x)?, transform_y(y, axes.log_y)?)))
                .collect()
        })
        .collect();
    let all = pts.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let sx = Scale::new(x0, x1, LEFT, W - RIGHT);
    let sy = Scale::new(y0, y1, H - BOTTOM, TOP);
    let mut svg = header(title);
    frame(&mut svg, x_label, y_label);
    for (t, label) in ticks(sx.lo, sx.hi, axes.log_x) {
        let x = sx.at(t);
        let _ = writeln!(
            svg,
            "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#ccc\"/><text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{label}</text>",
            TOP,
            H - BOTTOM,
            H - BOTTOM + 16.0
        );
    }
    for (t, label) in ticks(sy.lo, sy.hi, axes.log_y) {
        let y = sy.at(t);
        let _ = writeln!(
            svg,
            "<line x1=\"{LEFT}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#ccc\"/><text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{label}</text>",
            W - RIGHT,
            LEFT - 6.0,
            y + 4.0
        );
    }
    for (s, p) in series.iter().zip(&pts) {
        if p.len() == 1 {
            let _ = writeln!(
                svg,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{}\" fill-opacity=\"{}\"/>",
                sx.at(p[0].0),
                sy.at(p[0].1),
                s.color,
                s.opacity
            );
            continue;
        }
        let mut d = String::new();
        for (i, &(x, y)) in p.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, sx.at(x), sy.at(y));
        }
        let _ = writeln!(
            svg,
            "<path d=\"{d}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{}\" stroke-opacity=\"{}\"/>",
            s.color, s.width, s.opacity
        );
    }
    legend(&mut svg, series.iter().filter(|s| !s.label.is_empty()).map(|s| (s.label.as_str(), s.color)));
    svg.push_str("</svg>\n");
    svg
}

fn frame(svg: &mut String, x_label: &str, y_label: &str) {
    let _ = writeln!(
        svg,
        "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"black\"/>\n\
         <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">{}</text>",
        W - LEFT - RIGHT,
        H - TOP - BOTTOM,
        (LEFT + W - RIGHT) / 2.0,
        H - 10.0,
        escape(x_label),
        (TOP + H - BOTTOM) / 2.0,
        (TOP + H - BOTTOM) / 2.0,
        escape(y_label)
    );
}

fn legend<'a>(svg: &mut String, items: impl Iterator<Item = (&'a str, &'a str)>) {
    for (i, (label, color)) in items.enumerate() {
        let y = TOP + 14.0 + 16.0 * i as f64;
        let x = W - RIGHT - 150.0;
        let _ = writeln!(
            svg,
            "<line x1=\"{x:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"{color}\" stroke-width=\"2\"/><text x=\"{:.2}\" y=\"{:.2}\">{}</text>",
            x + 20.0,
            x + 26.0,
            y + 4.0,
            escape(label)
        );
    }
}

/// Mean over runs at each x present in every run.
pub fn mean_curve(runs: &[Vec<(f64, f64)>]) -> Vec<(f64, f64)> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    first
        .iter()
        .filter_map(|&(x, _)| {
            let ys: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.iter().find(|p| p.0 == x).map(|p| p.1))
                .collect();
            (ys.len() == runs.len()).then(|| (x, ys.iter().sum::<f64>() / ys.len() as f64))
        })
        .collect()
}

/// One translucent curve per run plus an opaque mean, per quantity.
pub fn seeds_chart(
    title: &str,
    y_label: &str,
    axes: Axes,
    quantities: &[(&str, Vec<Vec<(f64, f64)>>)],
) -> String {
    let mut series = Vec::new();
    for (i, (name, runs)) in quantities.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for r in runs {
            series.push(Series::new("", r.clone(), color).faint());
        }
        series.push(Series::new(*name, mean_curve(runs), color));
    }
    line_chart(title, "step", y_label, axes, &series)
}

pub fn bar_chart(title: &str, x_label: &str, y_label: &str, bars: &[(String, f64)]) -> String {
    let mut svg = header(title);
    frame(&mut svg, x_label, y_label);
    let top = bars.iter().map(|b| b.1).fold(0.0, f64::max);
    let sy = Scale::new(0.0, if top > 0.0 { top } else { 1.0 }, H - BOTTOM, TOP);
    let slot = (W - LEFT - RIGHT) / bars.len().max(1) as f64;
    for (t, label) in ticks(sy.lo, sy.hi, false) {
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{label}</text>",
            LEFT - 6.0,
            sy.at(t) + 4.0
        );
    }
    for (i, (label, v)) in bars.iter().enumerate() {
        let x = LEFT + slot * i as f64 + 0.1 * slot;
        let y = sy.at(v.max(0.0));
        let _ = writeln!(
            svg,
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/><text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"10\">{}</text>",
            0.8 * slot,
            (H - BOTTOM - y).max(0.0),
            PALETTE[0],
            x + 0.4 * slot,
            H - BOTTOM + 14.0,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Square heatmap of values in `[0, 1]` (white to dark blue).
pub fn heatmap(title: &str, labels: &[String], m: &[Vec<f64>]) -> String {
    let mut svg = header(title);
    let n = m.len().max(1);
    let side = (H - TOP - BOTTOM).min(W - LEFT - RIGHT);
    let cell = side / n as f64;
    let x0 = (W - side) / 2.0;
    for (i, row) in m.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let t = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
            let shade = |full: f64| (255.0 - t * (255.0 - full)).round() as u8;
            let _ = writeln!(
                svg,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{cell:.2}\" height=\"{cell:.2}\" fill=\"#{:02x}{:02x}{:02x}\"><title>{} {}: {v:.3}</title></rect>",
                x0 + cell * j as f64,
                TOP + cell * i as f64,
                shade(8.0),
                shade(48.0),
                shade(107.0),
                labels.get(i).map_or("", String::as_str),
                labels.get(j).map_or("", String::as_str)
            );
        }
    }
    for (i, l) in labels.iter().enumerate() {
        let c = cell * (i as f64 + 0.5);
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-size=\"9\">{}</text><text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"9\">{}</text>",
            x0 - 4.0,
            TOP + c + 3.0,
            escape(l),
            x0 + c,
            TOP + side + 12.0,
            escape(l)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
