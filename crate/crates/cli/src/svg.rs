//! Minimal deterministic SVG plots: lines, points, bars and shaded bands on
//! one pair of axes. Coordinates are rounded to 0.01 px, so identical data
//! always yields identical bytes.

use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 78.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 52.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    Points,
    Bars,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
}

/// Shaded region between two curves sampled at the same abscissae.
#[derive(Debug, Clone)]
pub struct Band {
    pub name: String,
    pub x: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Plots `log10(y)`; non-positive values are dropped.
    pub log_y: bool,
    pub series: Vec<Series>,
    pub bands: Vec<Band>,
}

impl Plot {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            ..Self::default()
        }
    }

    pub fn log_y(mut self) -> Self {
        self.log_y = true;
        self
    }

    pub fn series(mut self, name: impl Into<String>, points: Vec<(f64, f64)>, style: Style) -> Self {
        self.series.push(Series {
            name: name.into(),
            points,
            style,
        });
        self
    }

    pub fn band(mut self, band: Band) -> Self {
        self.bands.push(band);
        self
    }

    fn ty(&self, y: f64) -> Option<f64> {
        match (self.log_y, y) {
            (true, y) if y > 0.0 && y.is_finite() => Some(y.log10()),
            (true, _) => None,
            (false, y) if y.is_finite() => Some(y),
            _ => None,
        }
    }

    fn bounds(&self) -> ((f64, f64), (f64, f64)) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for s in &self.series {
            for &(x, y) in &s.points {
                if let (true, Some(y)) = (x.is_finite(), self.ty(y)) {
                    xs.push(x);
                    ys.push(y);
                }
            }
            if s.style == Style::Bars && !self.log_y {
                ys.push(0.0);
            }
        }
        for b in &self.bands {
            xs.extend(b.x.iter().copied().filter(|v| v.is_finite()));
            ys.extend(b.lower.iter().chain(&b.upper).filter_map(|&y| self.ty(y)));
        }
        let span = |v: &[f64]| {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 * (1.0 + lo.abs()) {
                (lo - 0.5, hi + 0.5)
            } else {
                let pad = 0.04 * (hi - lo);
                (lo - pad, hi + pad)
            }
        };
        (span(&xs), span(&ys))
    }

    pub fn render(&self) -> String {
        let ((x0, x1), (y0, y1)) = self.bounds();
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let py = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
        );

        for i in 0..=4 {
            let fx = x0 + (x1 - x0) * i as f64 / 4.0;
            let fy = y0 + (y1 - y0) * i as f64 / 4.0;
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                px(fx),
                TOP + ph + 16.0,
                tick(fx)
            );
            let label = if self.log_y { format!("1e{fy:.1}") } else { tick(fy) };
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#,
                LEFT - 6.0,
                py(fy) + 4.0
            );
            let _ = writeln!(
                out,
                r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
                LEFT + pw,
                y = py(fy)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{y:.2}" text-anchor="middle" transform="rotate(-90 16 {y:.2})">{}</text>"#,
            escape(&if self.log_y { format!("{} (log10)", self.y_label) } else { self.y_label.clone() }),
            y = TOP + ph / 2.0
        );

        let mut legend = Vec::new();
        for (i, b) in self.bands.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let upper = b.x.iter().zip(&b.upper).filter_map(|(&x, &y)| self.ty(y).map(|y| (x, y)));
            let lower: Vec<_> = b.x.iter().zip(&b.lower).filter_map(|(&x, &y)| self.ty(y).map(|y| (x, y))).collect();
            let pts: Vec<String> = upper
                .chain(lower.into_iter().rev())
                .map(|(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            let _ = writeln!(
                out,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#,
                pts.join(" ")
            );
            legend.push((b.name.clone(), color, None));
        }
        let bar_series = self.series.iter().filter(|s| s.style == Style::Bars).count().max(1);
        let mut bar_index = 0;
        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[(i + self.bands.len()) % PALETTE.len()];
            let pts: Vec<(f64, f64)> = s
                .points
                .iter()
                .filter_map(|&(x, y)| self.ty(y).filter(|_| x.is_finite()).map(|y| (px(x), py(y))))
                .collect();
            match s.style {
                Style::Line => {
                    let d: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                    let _ = writeln!(
                        out,
                        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                        d.join(" ")
                    );
                }
                Style::Points => {
                    for (x, y) in &pts {
                        let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="1.6" fill="{color}"/>"#);
                    }
                }
                Style::Bars => {
                    let slot = pw / (s.points.len().max(1) as f64 * 1.5 * bar_series as f64);
                    let base = py(if self.log_y { y0 } else { 0.0f64.clamp(y0, y1) });
                    for (x, y) in &pts {
                        let left = x - slot * bar_series as f64 / 2.0 + slot * bar_index as f64;
                        let _ = writeln!(
                            out,
                            r#"<rect x="{left:.2}" y="{:.2}" width="{slot:.2}" height="{:.2}" fill="{color}"/>"#,
                            y.min(base),
                            (base - y).abs()
                        );
                    }
                    bar_index += 1;
                }
            }
            legend.push((s.name.clone(), color, Some(s.style)));
        }
        for (i, (name, color, style)) in legend.iter().enumerate() {
            let y = TOP + 10.0 + 18.0 * i as f64;
            let x = WIDTH - RIGHT + 12.0;
            match style {
                Some(Style::Line) => {
                    let _ = writeln!(
                        out,
                        r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"/>"#,
                        x + 18.0
                    );
                }
                Some(Style::Points) => {
                    let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#, x + 9.0);
                }
                _ => {
                    let _ = writeln!(
                        out,
                        r#"<rect x="{x:.2}" y="{:.2}" width="18" height="10" fill="{color}" fill-opacity="{}"/>"#,
                        y - 5.0,
                        if style.is_none() { "0.3" } else { "1" }
                    );
                }
            }
            let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x + 24.0, y + 4.0, escape(name));
        }
        out.push_str("</svg>\n");
        out
    }
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-2..1e4).contains(&a) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_well_formed() {
        let plot = || {
            Plot::new("a < b", "x", "y")
                .series("line", vec![(0.0, 1.0), (1.0, 2.0)], Style::Line)
                .series("pts", vec![(0.5, 1.5)], Style::Points)
                .band(Band {
                    name: "band".into(),
                    x: vec![0.0, 1.0],
                    lower: vec![0.5, 1.5],
                    upper: vec![1.5, 2.5],
                })
                .render()
        };
        let a = plot();
        assert_eq!(a, plot());
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("a &lt; b"));
        assert!(a.contains(r#"viewBox="0 0 720 440""#));
    }

    #[test]
    fn log_axis_drops_non_positive_values() {
        let s = Plot::new("t", "x", "y")
            .log_y()
            .series("e", vec![(0.0, 1e-3), (1.0, 0.0), (2.0, 1e-6)], Style::Line)
            .render();
        assert_eq!(s.matches("<polyline").count(), 1);
        assert!(!s.contains("NaN") && !s.contains("inf"));
    }

    #[test]
    fn empty_plot_renders() {
        let s = Plot::new("empty", "x", "y").render();
        assert!(s.contains("empty"));
    }
}
