//! Minimal line plots: axes, ticks, polylines and a legend.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const TICKS: usize = 5;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Axis {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            (lo, hi) = (lo - 0.5, hi + 0.5);
        }
        Axis { lo, hi, log }
    }

    /// Position in `[0, 1]`.
    fn unit(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        (0..TICKS)
            .map(|k| {
                let t = self.lo + (self.hi - self.lo) * k as f64 / (TICKS - 1) as f64;
                let value = if self.log { 10f64.powf(t) } else { t };
                ((t - self.lo) / (self.hi - self.lo), format!("{value:.3e}"))
            })
            .collect()
    }
}

impl Plot {
    fn usable(&self, p: &(f64, f64)) -> bool {
        p.0.is_finite() && p.1.is_finite() && (!self.log_x || p.0 > 0.0) && (!self.log_y || p.1 > 0.0)
    }

    pub fn render(&self) -> String {
        let pts = || self.series.iter().flat_map(|s| s.points.iter()).filter(|p| self.usable(p));
        let ax = Axis::fit(pts().map(|p| p.0), self.log_x);
        let ay = Axis::fit(pts().map(|p| p.1), self.log_y);
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |u: f64| LEFT + u * pw;
        let sy = |u: f64| TOP + (1.0 - u) * ph;

        let mut out = String::new();
        let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for (u, label) in ax.ticks() {
            let x = sx(u);
            let _ = writeln!(out, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
            let _ = writeln!(out, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, escape(&label));
        }
        for (u, label) in ay.ticks() {
            let y = sy(u);
            let _ = writeln!(out, r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0);
            let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 8.0, y + 4.0, escape(&label));
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 10.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="15" y="{:.2}" text-anchor="middle" transform="rotate(-90 15 {:.2})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        for (k, s) in self.series.iter().enumerate() {
            let colour = PALETTE[k % PALETTE.len()];
            let coords: Vec<String> = s
                .points
                .iter()
                .filter(|p| self.usable(p))
                .map(|p| format!("{:.2},{:.2}", sx(ax.unit(p.0)), sy(ay.unit(p.1))))
                .collect();
            let dash = if s.dashed { r#" stroke-dasharray="6 3""# } else { "" };
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5"{dash} points="{}"/>"#,
                coords.join(" ")
            );
            let ly = TOP + 12.0 + 16.0 * k as f64;
            let lx = WIDTH - RIGHT + 10.0;
            let _ = writeln!(
                out,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="1.5"{dash}/>"#,
                lx + 20.0
            );
            let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, lx + 25.0, ly + 4.0, escape(&s.label));
        }
        out.push_str("</svg>\n");
        out
    }
}
