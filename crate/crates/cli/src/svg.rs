//! Minimal SVG 1.1 line charts.
//!
//! Charts are views of numbers that are also written to CSV; nothing here
//! computes new values beyond axis ticks.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 360.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 48.0;
const PALETTE: [&str; 6] = ["#1f5fa8", "#c0392b", "#2e8b57", "#8e44ad", "#d68910", "#555555"];

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    /// Gaps (`None`) break the line.
    pub values: Vec<Option<f64>>,
}

impl Series {
    pub fn new(name: impl Into<String>, values: &[f64]) -> Series {
        Series { name: name.into(), values: values.iter().map(|&v| Some(v)).collect() }
    }

    pub fn with_gaps(name: impl Into<String>, values: Vec<Option<f64>>) -> Series {
        Series { name: name.into(), values }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LineChart {
    pub title: String,
    pub x_labels: Vec<String>,
    pub series: Vec<Series>,
    /// Shaded area between two curves.
    pub band: Option<(Vec<f64>, Vec<f64>)>,
    pub zero_line: bool,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// About five round tick values covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

impl LineChart {
    fn extent(&self) -> (usize, f64, f64) {
        let mut n = self.x_labels.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut see = |v: f64| {
            if v.is_finite() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        };
        for s in &self.series {
            n = n.max(s.values.len());
            s.values.iter().flatten().for_each(|&v| see(v));
        }
        if let Some((a, b)) = &self.band {
            a.iter().chain(b).for_each(|&v| see(v));
        }
        if self.zero_line {
            see(0.0);
        }
        if !lo.is_finite() {
            (lo, hi) = (-1.0, 1.0);
        }
        if hi - lo < 1e-12 * hi.abs().max(1.0) {
            let pad = hi.abs().max(1.0) * 0.5;
            (lo, hi) = (lo - pad, hi + pad);
        }
        let pad = (hi - lo) * 0.05;
        (n, lo - pad, hi + pad)
    }

    pub fn render(&self) -> String {
        let (n, lo, hi) = self.extent();
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let x = |i: usize| LEFT + if n > 1 { pw * i as f64 / (n - 1) as f64 } else { pw / 2.0 };
        let y = |v: f64| TOP + ph * (hi - v) / (hi - lo);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">
<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>
<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        for t in ticks(lo, hi) {
            let yy = y(t);
            let _ = writeln!(
                s,
                r##"<line x1="{LEFT}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="#e5e5e5"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                WIDTH - RIGHT,
                LEFT - 6.0,
                yy + 4.0,
                fmt_tick(t)
            );
        }
        if self.zero_line {
            let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{0:.2}" x2="{1:.2}" y2="{0:.2}" stroke="#000" stroke-width="0.8"/>"##, y(0.0), WIDTH - RIGHT);
        }
        let _ = writeln!(
            s,
            r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#888"/>"##
        );
        if !self.x_labels.is_empty() {
            let count = self.x_labels.len();
            let every = count.div_ceil(8).max(1);
            for (i, label) in self.x_labels.iter().enumerate() {
                if i % every == 0 || i + 1 == count {
                    let _ = writeln!(
                        s,
                        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                        x(i),
                        HEIGHT - BOTTOM + 16.0,
                        escape(label)
                    );
                }
            }
        }
        if let Some((a, b)) = &self.band {
            let mut pts: Vec<String> = a.iter().enumerate().map(|(i, &v)| format!("{:.2},{:.2}", x(i), y(v))).collect();
            pts.extend(b.iter().enumerate().rev().map(|(i, &v)| format!("{:.2},{:.2}", x(i), y(v))));
            let _ = writeln!(s, r##"<polygon points="{}" fill="#1f5fa8" fill-opacity="0.18" stroke="none"/>"##, pts.join(" "));
        }
        for (k, series) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let mut run: Vec<String> = Vec::new();
            let flush = |run: &mut Vec<String>, s: &mut String| {
                if run.len() > 1 {
                    let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, run.join(" "));
                } else if let Some(p) = run.first() {
                    let (px, py) = p.split_once(',').unwrap_or(("0", "0"));
                    let _ = writeln!(s, r#"<circle cx="{px}" cy="{py}" r="2" fill="{color}"/>"#);
                }
                run.clear();
            };
            for (i, v) in series.values.iter().enumerate() {
                match v {
                    Some(v) if v.is_finite() => run.push(format!("{:.2},{:.2}", x(i), y(*v))),
                    _ => flush(&mut run, &mut s),
                }
            }
            flush(&mut run, &mut s);
            let ly = TOP + 14.0 + 14.0 * k as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                LEFT + 10.0,
                LEFT + 28.0,
                LEFT + 32.0,
                ly + 4.0,
                escape(&series.name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round_and_cover_range() {
        let t = ticks(-0.13, 0.92);
        assert!(t.first().unwrap() >= &-0.13 && t.last().unwrap() <= &0.92);
        assert!(t.contains(&0.0));
        assert!(t.len() >= 3 && t.len() <= 7);
        assert_eq!(fmt_tick(0.30000000000000004), "0.3");
    }

    #[test]
    fn renders_wellformed_document() {
        let chart = LineChart {
            title: "β <h>".into(),
            x_labels: (0..5).map(|i| i.to_string()).collect(),
            series: vec![
                Series::new("irf", &[1.0, 0.8, 0.64, 0.5, 0.4]),
                Series::with_gaps("partial", vec![None, Some(0.2), None, Some(0.1), Some(0.0)]),
            ],
            band: Some((vec![0.5; 5], vec![1.5; 5])),
            zero_line: true,
        };
        let svg = chart.render();
        assert!(svg.starts_with("<?xml"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("&lt;h&gt;"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<circle").count(), 1);
        assert_eq!(svg.matches("<polygon").count(), 1);
    }

    #[test]
    fn constant_and_empty_series_do_not_divide_by_zero() {
        let c = LineChart { title: "flat".into(), series: vec![Series::new("c", &[2.0, 2.0])], ..Default::default() };
        assert!(!c.render().contains("NaN"));
        let e = LineChart::default();
        assert!(!e.render().contains("NaN"));
    }
}
