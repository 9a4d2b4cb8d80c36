//! Minimal SVG line plots of bifurcation sets.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

/// Line styles of a bifurcation diagram: double lines for Hopf-type and
/// grazing loci, dashed for collisions without a bifurcation, solid for
/// saddle-nodes of periodic orbits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LineStyle {
    Double,
    Dashed,
    Solid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlotSeries {
    pub label: String,
    pub style: LineStyle,
    pub color: &'static str,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<PlotSeries>,
    pub markers: Vec<(String, (f64, f64))>,
}

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("plot has no series with points")]
    Empty,
    #[error(transparent)]
    Io(#[from] io::Error),
}

const W: f64 = 720.0;
const H: f64 = 540.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 70.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Round step of roughly `span / 5`.
fn tick_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let m = raw / mag;
    let nice = if m < 1.5 {
        1.0
    } else if m < 3.5 {
        2.0
    } else if m < 7.5 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

impl PlotSpec {
    fn bounds(&self) -> Option<(f64, f64, f64, f64)> {
        let pts = self.series.iter().flat_map(|s| s.points.iter()).chain(self.markers.iter().map(|m| &m.1));
        let mut b = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        let mut any = false;
        for &(x, y) in pts.filter(|p| p.0.is_finite() && p.1.is_finite()) {
            any = true;
            b = (b.0.min(x), b.1.max(x), b.2.min(y), b.3.max(y));
        }
        if !any {
            return None;
        }
        let pad = |lo: f64, hi: f64| {
            let d = if hi > lo { 0.05 * (hi - lo) } else { 0.5 * lo.abs().max(1e-3) };
            (lo - d, hi + d)
        };
        let (x0, x1) = pad(b.0, b.1);
        let (y0, y1) = pad(b.2, b.3);
        Some((x0, x1, y0, y1))
    }

    pub fn render(&self) -> Result<String, PlotError> {
        if self.series.iter().all(|s| s.points.is_empty()) {
            return Err(PlotError::Empty);
        }
        let (x0, x1, y0, y1) = self.bounds().ok_or(PlotError::Empty)?;
        let pw = W - LEFT - RIGHT;
        let ph = H - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;
        let mut s = String::new();
        let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="13">"#
        );
        let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="28" text-anchor="middle" font-size="16">{}</text>"#, W / 2.0, escape(&self.title));
        let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);

        let dx = tick_step(x1 - x0);
        let mut t = (x0 / dx).ceil() * dx;
        while t <= x1 {
            let x = sx(t);
            let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
            let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#, TOP + ph + 20.0, fmt_tick(t, dx));
            t += dx;
        }
        let dy = tick_step(y1 - y0);
        let mut t = (y0 / dy).ceil() * dy;
        while t <= y1 {
            let y = sy(t);
            let _ = writeln!(s, r#"<line x1="{}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0);
            let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 8.0, y + 4.0, fmt_tick(t, dy));
            t += dy;
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 20.0, escape(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="22" y="{}" text-anchor="middle" transform="rotate(-90 22 {})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );

        let _ = writeln!(s, r#"<clipPath id="plot"><rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}"/></clipPath>"#);
        let _ = writeln!(s, r#"<g clip-path="url(#plot)" fill="none">"#);
        for series in &self.series {
            let pts: Vec<String> = series
                .points
                .iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            if pts.is_empty() {
                continue;
            }
            let pts = pts.join(" ");
            let c = series.color;
            match series.style {
                LineStyle::Double => {
                    let _ = writeln!(s, r#"<polyline points="{pts}" stroke="{c}" stroke-width="4.5"/>"#);
                    let _ = writeln!(s, r#"<polyline points="{pts}" stroke="white" stroke-width="1.8"/>"#);
                }
                LineStyle::Dashed => {
                    let _ = writeln!(s, r#"<polyline points="{pts}" stroke="{c}" stroke-width="1.5" stroke-dasharray="6 4"/>"#);
                }
                LineStyle::Solid => {
                    let _ = writeln!(s, r#"<polyline points="{pts}" stroke="{c}" stroke-width="1.8"/>"#);
                }
            }
        }
        for (label, (x, y)) in &self.markers {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="black"/>"#, sx(*x), sy(*y));
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" fill="black">{}</text>"#, sx(*x) + 7.0, sy(*y) - 7.0, escape(label));
        }
        let _ = writeln!(s, "</g>");

        for (i, series) in self.series.iter().enumerate() {
            let y = TOP + 18.0 + 18.0 * i as f64;
            let (a, b) = (LEFT + 12.0, LEFT + 42.0);
            let c = series.color;
            match series.style {
                LineStyle::Double => {
                    let _ = writeln!(s, r#"<line x1="{a}" y1="{y}" x2="{b}" y2="{y}" stroke="{c}" stroke-width="4.5"/>"#);
                    let _ = writeln!(s, r#"<line x1="{a}" y1="{y}" x2="{b}" y2="{y}" stroke="white" stroke-width="1.8"/>"#);
                }
                LineStyle::Dashed => {
                    let _ = writeln!(s, r#"<line x1="{a}" y1="{y}" x2="{b}" y2="{y}" stroke="{c}" stroke-width="1.5" stroke-dasharray="6 4"/>"#);
                }
                LineStyle::Solid => {
                    let _ = writeln!(s, r#"<line x1="{a}" y1="{y}" x2="{b}" y2="{y}" stroke="{c}" stroke-width="1.8"/>"#);
                }
            }
            let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, b + 8.0, y + 4.0, escape(&series.label));
        }
        s.push_str("</svg>\n");
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<(), PlotError> {
        fs::write(path, self.render()?)?;
        Ok(())
    }
}

fn fmt_tick(v: f64, step: f64) -> String {
    let digits = (-step.log10().floor()).max(0.0) as usize;
    let v = if v.abs() < 1e-12 * step { 0.0 } else { v };
    format!("{v:.digits$}")
}
