//! A tiny SVG plotter. Output depends only on the data: coordinates are
//! printed with fixed precision and nothing time-dependent is embedded.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
const TICKS: usize = 5;

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
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

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn span(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(out, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
        WIDTH / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str, y_tick: impl Fn(f64) -> String) {
    let (l, r, t, b) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(
        out,
        "<path d=\"M{l:.1} {t:.1} L{l:.1} {b:.1} L{r:.1} {b:.1}\" fill=\"none\" stroke=\"black\"/>"
    );
    for i in 0..=TICKS {
        let fx = f.x0 + (f.x1 - f.x0) * i as f64 / TICKS as f64;
        let fy = f.y0 + (f.y1 - f.y0) * i as f64 / TICKS as f64;
        let (px, py) = (f.px(fx), f.py(fy));
        let _ = writeln!(
            out,
            "<text x=\"{px:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            b + 16.0,
            format_tick(fx)
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            l - 6.0,
            py + 4.0,
            y_tick(fy)
        );
        let _ = writeln!(
            out,
            "<path d=\"M{l:.1} {py:.1} L{r:.1} {py:.1}\" stroke=\"#dddddd\"/>"
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
        (l + r) / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>",
        (t + b) / 2.0,
        (t + b) / 2.0,
        escape(y_label)
    );
}

fn format_tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-2..1e4).contains(&a) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}").trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

pub fn line_chart(chart: &LineChart) -> String {
    let transform = |y: f64| if chart.log_y { y.log10() } else { y };
    let pts: Vec<Vec<(f64, f64)>> = chart
        .series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .map(|&(x, y)| (x, transform(y)))
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .collect()
        })
        .collect();
    let all = pts.iter().flatten();
    let (x0, x1) = span(
        all.clone().map(|p| p.0).fold(f64::INFINITY, f64::min),
        all.clone().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max),
    );
    let (y0, y1) = span(
        all.clone().map(|p| p.1).fold(f64::INFINITY, f64::min),
        all.map(|p| p.1).fold(f64::NEG_INFINITY, f64::max),
    );
    let frame = Frame { x0, x1, y0, y1 };

    let mut out = String::new();
    header(&mut out, &chart.title);
    let log_y = chart.log_y;
    axes(&mut out, &frame, &chart.x_label, &chart.y_label, |v| {
        if log_y {
            format_tick(10f64.powf(v))
        } else {
            format_tick(v)
        }
    });
    for (idx, (series, points)) in chart.series.iter().zip(&pts).enumerate() {
        let color = COLORS[idx % COLORS.len()];
        if !points.is_empty() {
            let mut d = String::new();
            for (j, (x, y)) in points.iter().enumerate() {
                let _ = write!(d, "{}{:.2} {:.2}", if j == 0 { "M" } else { " L" }, frame.px(*x), frame.py(*y));
            }
            let _ = writeln!(out, "<path d=\"{d}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>");
        }
        let ly = TOP + 14.0 + 16.0 * idx as f64;
        let lx = WIDTH - RIGHT - 150.0;
        let _ = writeln!(
            out,
            "<path d=\"M{lx:.1} {:.1} L{:.1} {:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>",
            ly - 4.0,
            lx + 20.0,
            ly - 4.0
        );
        let _ = writeln!(out, "<text x=\"{:.1}\" y=\"{ly:.1}\">{}</text>", lx + 26.0, escape(&series.name));
    }
    out.push_str("</svg>\n");
    out
}

/// Bars over `(lo, hi, count)` bins.
pub fn histogram(title: &str, x_label: &str, bins: &[(f64, f64, f64)]) -> String {
    let x0 = bins.first().map_or(0.0, |b| b.0);
    let x1 = bins.last().map_or(1.0, |b| b.1);
    let top = bins.iter().map(|b| b.2).fold(0.0, f64::max);
    let (x0, x1) = span(x0, x1);
    let (y0, y1) = span(0.0, top);
    let frame = Frame { x0, x1, y0, y1 };
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &frame, x_label, "count", format_tick);
    for (lo, hi, c) in bins {
        let (px0, px1) = (frame.px(*lo), frame.px(*hi));
        let (py_top, py_base) = (frame.py(*c), frame.py(0.0));
        let _ = writeln!(
            out,
            "<rect x=\"{px0:.2}\" y=\"{py_top:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\" stroke=\"white\"/>",
            px1 - px0,
            py_base - py_top,
            COLORS[0]
        );
    }
    out.push_str("</svg>\n");
    out
}
