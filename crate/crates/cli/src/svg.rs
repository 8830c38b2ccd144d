//! Minimal line charts written as SVG text.

use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const TICKS: usize = 5;

pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Solid,
    Dashed,
    /// Unconnected circular markers.
    Points,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub style: Style,
    pub color: String,
}

impl Series {
    pub fn new(name: impl Into<String>, xs: Vec<f64>, ys: Vec<f64>, style: Style, color: &str) -> Self {
        Self {
            name: name.into(),
            xs,
            ys,
            style,
            color: color.to_string(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Coordinates are printed with two decimals so output bytes do not depend on
/// float formatting noise.
fn num(v: f64) -> String {
    let r = (v * 100.0).round() / 100.0;
    if r == 0.0 {
        "0".into()
    } else {
        format!("{r:.2}")
    }
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.05;
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

impl Chart {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
        }
    }

    pub fn push(&mut self, series: Series) {
        self.series.push(series);
    }

    pub fn to_svg(&self) -> String {
        let (x0, x1) = range(self.series.iter().flat_map(|s| s.xs.iter().copied()));
        let (y0, y1) = range(self.series.iter().flat_map(|s| s.ys.iter().copied()));
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
            w = WIDTH,
            h = HEIGHT
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            num(LEFT + pw / 2.0),
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            num(LEFT),
            num(TOP),
            num(pw),
            num(ph)
        );
        for k in 0..=TICKS {
            let f = k as f64 / TICKS as f64;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let (px, py) = (sx(xv), sy(yv));
            let _ = writeln!(
                out,
                r#"<line x1="{px}" y1="{b}" x2="{px}" y2="{b5}" stroke="black"/><text x="{px}" y="{bt}" text-anchor="middle">{}</text>"#,
                tick_label(xv),
                px = num(px),
                b = num(TOP + ph),
                b5 = num(TOP + ph + 5.0),
                bt = num(TOP + ph + 18.0),
            );
            let _ = writeln!(
                out,
                r#"<line x1="{l5}" y1="{py}" x2="{l}" y2="{py}" stroke="black"/><text x="{lt}" y="{pyt}" text-anchor="end">{}</text>"#,
                tick_label(yv),
                py = num(py),
                pyt = num(py + 4.0),
                l = num(LEFT),
                l5 = num(LEFT - 5.0),
                lt = num(LEFT - 8.0),
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            num(LEFT + pw / 2.0),
            num(HEIGHT - 12.0),
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="18" y="{y}" text-anchor="middle" transform="rotate(-90 18 {y})">{}</text>"#,
            escape(&self.y_label),
            y = num(TOP + ph / 2.0)
        );

        for s in &self.series {
            let pts: Vec<String> = s
                .xs
                .iter()
                .zip(&s.ys)
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|(&x, &y)| format!("{},{}", num(sx(x)), num(sy(y))))
                .collect();
            match s.style {
                Style::Points => {
                    for p in &pts {
                        let (cx, cy) = p.split_once(',').unwrap();
                        let _ = writeln!(
                            out,
                            r#"<circle cx="{cx}" cy="{cy}" r="3.5" fill="{}"/>"#,
                            s.color
                        );
                    }
                }
                style => {
                    let dash = if style == Style::Dashed {
                        r#" stroke-dasharray="6 4""#
                    } else {
                        ""
                    };
                    let _ = writeln!(
                        out,
                        r#"<polyline fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"/>"#,
                        s.color,
                        pts.join(" ")
                    );
                }
            }
        }

        let lx = WIDTH - RIGHT + 12.0;
        for (i, s) in self.series.iter().enumerate() {
            let y = TOP + 10.0 + 18.0 * i as f64;
            match s.style {
                Style::Points => {
                    let _ = writeln!(
                        out,
                        r#"<circle cx="{}" cy="{}" r="3.5" fill="{}"/>"#,
                        num(lx + 12.0),
                        num(y),
                        s.color
                    );
                }
                style => {
                    let dash = if style == Style::Dashed {
                        r#" stroke-dasharray="6 4""#
                    } else {
                        ""
                    };
                    let _ = writeln!(
                        out,
                        r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="1.5"{dash}/>"#,
                        num(lx),
                        num(lx + 24.0),
                        s.color,
                        y = num(y)
                    );
                }
            }
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}">{}</text>"#,
                num(lx + 30.0),
                num(y + 4.0),
                escape(&s.name)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart() -> Chart {
        let mut c = Chart::new("a < b", "t (s)", "d (mm)");
        c.push(Series::new("desired", vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 4.0], Style::Solid, PALETTE[0]));
        c.push(Series::new("measured", vec![0.0, 1.0, 2.0], vec![0.1, 0.9, 4.2], Style::Dashed, PALETTE[1]));
        c.push(Series::new("points", vec![1.0], vec![2.0], Style::Points, PALETTE[2]));
        c
    }

    #[test]
    fn structure() {
        let svg = chart().to_svg();
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("stroke-dasharray").count(), 2);
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(svg.contains("a &lt; b"));
    }

    #[test]
    fn output_is_reproducible() {
        assert_eq!(chart().to_svg(), chart().to_svg());
    }

    #[test]
    fn flat_and_empty_series_have_finite_axes() {
        let mut c = Chart::new("flat", "x", "y");
        c.push(Series::new("f", vec![0.0, 1.0], vec![3.0, 3.0], Style::Solid, PALETTE[0]));
        assert!(!c.to_svg().contains("NaN"));
        assert!(!Chart::new("e", "x", "y").to_svg().contains("NaN"));
    }
}
