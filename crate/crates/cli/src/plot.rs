//! Minimal SVG line-plot writer. Fixed canvas, built-in palette, no
//! dependencies; output bytes are a pure function of the input.

use std::fmt::Write as _;

pub struct Series<'a> {
    pub label: &'a str,
    pub points: &'a [(f64, f64)],
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 44.0;
const BOTTOM: f64 = 58.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f",
];

fn minmax<I: Iterator<Item = f64>>(values: I) -> Option<(f64, f64)> {
    let mut r: Option<(f64, f64)> = None;
    for v in values.filter(|v| v.is_finite()) {
        r = Some(match r {
            None => (v, v),
            Some((lo, hi)) => (lo.min(v), hi.max(v)),
        });
    }
    r
}

fn pad((lo, hi): (f64, f64)) -> (f64, f64) {
    if hi > lo {
        let m = 0.05 * (hi - lo);
        (lo - m, hi + m)
    } else {
        // degenerate span; widen around the value
        let m = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        (lo - m, hi + m)
    }
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1.0e-3..1.0e5).contains(&a) {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{v:.2e}")
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn sx(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn sy(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn open_svg(title: &str, x_label: &str, y_label: &str, frame: &Frame) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"13\">\n"
    );
    let _ = writeln!(s, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>");
    // gridlines and tick labels, five per axis
    for i in 0..=4 {
        let fx = frame.x0 + (frame.x1 - frame.x0) * i as f64 / 4.0;
        let px = frame.sx(fx);
        let _ = writeln!(
            s,
            "<line x1=\"{px:.2}\" y1=\"{TOP}\" x2=\"{px:.2}\" y2=\"{:.2}\" \
             stroke=\"#dddddd\"/>",
            HEIGHT - BOTTOM
        );
        let _ = writeln!(
            s,
            "<text x=\"{px:.2}\" y=\"{:.2}\" text-anchor=\"middle\" fill=\"#333333\">{}</text>",
            HEIGHT - BOTTOM + 20.0,
            tick_label(fx)
        );
        let fy = frame.y0 + (frame.y1 - frame.y0) * i as f64 / 4.0;
        let py = frame.sy(fy);
        let _ = writeln!(
            s,
            "<line x1=\"{LEFT}\" y1=\"{py:.2}\" x2=\"{:.2}\" y2=\"{py:.2}\" \
             stroke=\"#dddddd\"/>",
            WIDTH - RIGHT
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" fill=\"#333333\">{}</text>",
            LEFT - 8.0,
            py + 4.0,
            tick_label(fy)
        );
    }
    let _ = writeln!(
        s,
        "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" \
         stroke=\"#333333\"/>",
        WIDTH - LEFT - RIGHT,
        HEIGHT - TOP - BOTTOM
    );
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"26\" text-anchor=\"middle\" font-size=\"16\" \
         fill=\"#111111\">{}</text>",
        WIDTH / 2.0,
        esc(title)
    );
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" fill=\"#333333\">{}</text>",
        LEFT + (WIDTH - LEFT - RIGHT) / 2.0,
        HEIGHT - 14.0,
        esc(x_label)
    );
    let _ = writeln!(
        s,
        "<text x=\"20\" y=\"{:.2}\" text-anchor=\"middle\" fill=\"#333333\" \
         transform=\"rotate(-90 20 {:.2})\">{}</text>",
        TOP + (HEIGHT - TOP - BOTTOM) / 2.0,
        TOP + (HEIGHT - TOP - BOTTOM) / 2.0,
        esc(y_label)
    );
    s
}

/// Render one or more polyline series into a standalone SVG document.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let xs = minmax(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let ys = minmax(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let (x0, x1) = pad(xs.unwrap_or((0.0, 1.0)));
    let (y0, y1) = pad(ys.unwrap_or((0.0, 1.0)));
    let frame = Frame { x0, x1, y0, y1 };
    let mut s = open_svg(title, x_label, y_label, &frame);
    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut pts = String::new();
        for &(x, y) in ser.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
            let _ = write!(pts, "{:.2},{:.2} ", frame.sx(x), frame.sy(y));
        }
        let _ = writeln!(
            s,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            pts.trim_end()
        );
    }
    if series.len() > 1 {
        for (k, ser) in series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let y = TOP + 16.0 + 18.0 * k as f64;
            let x = WIDTH - RIGHT - 150.0;
            let _ = writeln!(
                s,
                "<line x1=\"{x:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" \
                 stroke=\"{color}\" stroke-width=\"2\"/>",
                x + 24.0
            );
            let _ = writeln!(
                s,
                "<text x=\"{:.2}\" y=\"{:.2}\" fill=\"#333333\">{}</text>",
                x + 30.0,
                y + 4.0,
                esc(ser.label)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Render signed impulses (hole/anti-hole sticks) around a zero baseline.
pub fn stick_plot(title: &str, x_label: &str, y_label: &str, sticks: &[(f64, f64)]) -> String {
    let xs = minmax(sticks.iter().map(|p| p.0));
    let ys = minmax(sticks.iter().map(|p| p.1).chain([0.0]));
    let (x0, x1) = pad(xs.unwrap_or((0.0, 1.0)));
    let (y0, y1) = pad(ys.unwrap_or((-1.0, 1.0)));
    let frame = Frame { x0, x1, y0, y1 };
    let mut s = open_svg(title, x_label, y_label, &frame);
    let base = frame.sy(0.0);
    let _ = writeln!(
        s,
        "<line x1=\"{LEFT}\" y1=\"{base:.2}\" x2=\"{:.2}\" y2=\"{base:.2}\" \
         stroke=\"#999999\"/>",
        WIDTH - RIGHT
    );
    for &(x, v) in sticks.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
        let color = if v < 0.0 { PALETTE[1] } else { PALETTE[0] };
        let _ = writeln!(
            s,
            "<line x1=\"{0:.2}\" y1=\"{base:.2}\" x2=\"{0:.2}\" y2=\"{1:.2}\" \
             stroke=\"{color}\" stroke-width=\"2\"/>",
            frame.sx(x),
            frame.sy(v)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_is_deterministic_and_well_formed() {
        let pts: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, (i as f64 * 0.3).sin())).collect();
        let series = [Series { label: "wave", points: &pts }];
        let a = line_plot("Title", "x", "y", &series);
        let b = line_plot("Title", "x", "y", &series);
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.trim_end().ends_with("</svg>"));
        assert_eq!(a.matches("<polyline").count(), 1);
    }

    #[test]
    fn degenerate_ranges_do_not_divide_by_zero() {
        let flat = [(1.0, 5.0), (2.0, 5.0)];
        let s = line_plot("Flat", "x", "y", &[Series { label: "f", points: &flat }]);
        assert!(!s.contains("NaN"));
        let single = [(0.0, 0.0)];
        let s2 = stick_plot("One", "x", "y", &single);
        assert!(!s2.contains("NaN"));
    }

    #[test]
    fn sticks_color_by_sign() {
        let s = stick_plot("P", "f", "a", &[(0.0, -1.0), (1.0, 0.5)]);
        assert!(s.contains("#d62728") && s.contains("#1f77b4"));
    }

    #[test]
    fn labels_are_escaped() {
        let s = line_plot("a<b", "x & y", "z", &[Series { label: "l", points: &[(0.0, 1.0)] }]);
        assert!(s.contains("a&lt;b") && s.contains("x &amp; y"));
    }
}
