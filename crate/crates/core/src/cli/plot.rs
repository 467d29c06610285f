//! Log-log scatter plots with error bars and a fitted line, written as SVG.

use std::fmt::Write;

pub struct Point {
    pub x: f64,
    pub y: f64,
    /// half-width of the error bar
    pub err: f64,
}

pub struct LogLogPlot<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub points: Vec<Point>,
    /// `log y = intercept + slope · log x` and its standard error
    pub fit: Option<(f64, f64, f64)>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;

fn decades(lo: f64, hi: f64) -> (i32, i32) {
    let a = lo.log10().floor() as i32;
    let mut b = hi.log10().ceil() as i32;
    if b <= a {
        b = a + 1;
    }
    (a, b)
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

impl LogLogPlot<'_> {
    pub fn to_svg(&self) -> String {
        let pts: Vec<&Point> = self
            .points
            .iter()
            .filter(|p| p.x > 0.0 && p.y > 0.0)
            .collect();
        let (xmin, xmax) = bounds(pts.iter().map(|p| p.x));
        let (ymin, ymax) = bounds(pts.iter().flat_map(|p| [p.y, p.y + p.err]));
        let (xa, xb) = decades(xmin, xmax);
        let (ya, yb) = decades(ymin, ymax);
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x.log10() - xa as f64) / (xb - xa) as f64 * pw;
        let sy = |y: f64| TOP + ph - (y.log10() - ya as f64) / (yb - ya) as f64 * ph;
        let floor_y = 10f64.powi(ya);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="13">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="28" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            esc(self.title)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##
        );
        for k in xa..=xb {
            for m in 1..10 {
                let v = m as f64 * 10f64.powi(k);
                if k == xb && m > 1 {
                    break;
                }
                let x = sx(v);
                let (len, stroke) = if m == 1 { (8.0, "#333") } else { (4.0, "#777") };
                let _ = writeln!(
                    s,
                    r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{stroke}"/>"#,
                    TOP + ph,
                    TOP + ph - len
                );
                if m == 1 {
                    let _ = writeln!(
                        s,
                        r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">10<tspan dy="-6" font-size="10">{k}</tspan></text>"#,
                        TOP + ph + 20.0
                    );
                }
            }
        }
        for k in ya..=yb {
            for m in 1..10 {
                let v = m as f64 * 10f64.powi(k);
                if k == yb && m > 1 {
                    break;
                }
                let y = sy(v);
                let (len, stroke) = if m == 1 { (8.0, "#333") } else { (4.0, "#777") };
                let _ = writeln!(
                    s,
                    r#"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{stroke}"/>"#,
                    LEFT + len
                );
                if m == 1 {
                    let _ = writeln!(
                        s,
                        r#"<text x="{:.2}" y="{:.2}" text-anchor="end">10<tspan dy="-6" font-size="10">{k}</tspan></text>"#,
                        LEFT - 8.0,
                        y + 5.0
                    );
                }
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 15.0,
            esc(self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            esc(self.y_label)
        );

        if let Some((intercept, slope, stderr)) = self.fit {
            let line = |x: f64| (intercept + slope * x.ln()).exp();
            let _ = writeln!(
                s,
                r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#c0392b" stroke-dasharray="6 4"/>"##,
                sx(xmin),
                sy(line(xmin)),
                sx(xmax),
                sy(line(xmax))
            );
            let _ = writeln!(
                s,
                r##"<text x="{:.2}" y="{:.2}" text-anchor="end" fill="#c0392b">slope = {slope:.3} ± {stderr:.3}</text>"##,
                LEFT + pw - 10.0,
                TOP + 20.0
            );
        }
        for p in &pts {
            let x = sx(p.x);
            let lo = (p.y - p.err).max(floor_y);
            let hi = p.y + p.err;
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#1f4e79"/>"##,
                sy(lo),
                sy(hi)
            );
            for yy in [lo, hi] {
                let _ = writeln!(
                    s,
                    r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#1f4e79"/>"##,
                    x - 4.0,
                    sy(yy),
                    x + 4.0,
                    sy(yy)
                );
            }
            let _ = writeln!(
                s,
                r##"<circle cx="{x:.2}" cy="{:.2}" r="4" fill="#1f4e79"/>"##,
                sy(p.y)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| *v > 0.0 && v.is_finite())
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if lo.is_finite() {
        (lo, hi)
    } else {
        (1.0, 10.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_has_points_bars_and_slope() {
        let plot = LogLogPlot {
            title: "MSE vs n",
            x_label: "n",
            y_label: "MSE",
            points: [16.0, 32.0, 64.0]
                .iter()
                .map(|&x| Point {
                    x,
                    y: 1.0 / x,
                    err: 0.5 / x,
                })
                .collect(),
            fit: Some((0.0, -1.0, 0.01)),
        };
        let svg = plot.to_svg();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("slope = -1.000 ± 0.010"));
    }
}
