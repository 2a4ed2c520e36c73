//! Minimal self-contained SVG line plots.

use std::fmt::Write;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];
const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: (f64, f64, f64, f64) = (60.0, 20.0, 40.0, 50.0); // left, right, top, bottom

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Optional half-width of a shaded band around each point.
    pub spread: Option<Vec<f64>>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { name: name.into(), points, spread: None }
    }

    pub fn with_spread(mut self, spread: Vec<f64>) -> Self {
        self.spread = Some(spread);
        self
    }
}

/// Horizontal reference line, e.g. a constraint threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct HLine {
    pub label: String,
    pub y: f64,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn nice_ticks(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / count as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Renders the series as an SVG document. Non-finite points are skipped and
/// split the polyline.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series], hlines: &[HLine]) -> String {
    let finite = |p: &(f64, f64)| p.0.is_finite() && p.1.is_finite();
    let mut xs = vec![];
    let mut ys: Vec<f64> = hlines.iter().map(|h| h.y).filter(|y| y.is_finite()).collect();
    for s in series {
        for (i, p) in s.points.iter().enumerate().filter(|(_, p)| finite(p)) {
            xs.push(p.0);
            let d = s.spread.as_ref().and_then(|v| v.get(i)).copied().filter(|d| d.is_finite()).unwrap_or(0.0);
            ys.push(p.1 - d);
            ys.push(p.1 + d);
        }
    }
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        match (lo.is_finite(), hi > lo) {
            (false, _) => (0.0, 1.0),
            (true, true) => (lo, hi),
            (true, false) => (lo - 0.5, lo + 0.5),
        }
    };
    let (x0, x1) = range(&xs);
    let (y0, y1) = range(&ys);
    let (l, r, t, b) = MARGIN;
    let px = |x: f64| l + (x - x0) / (x1 - x0) * (WIDTH - l - r);
    let py = |y: f64| HEIGHT - b - (y - y0) / (y1 - y0) * (HEIGHT - t - b);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="16" text-anchor="middle" font-size="13">{}</text>"#, WIDTH / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - l - r,
        HEIGHT - t - b
    );
    for v in nice_ticks(x0, x1, 6) {
        let x = px(v);
        let _ = writeln!(s, r##"<line x1="{x:.1}" y1="{}" x2="{x:.1}" y2="{}" stroke="#ddd"/>"##, t, HEIGHT - b);
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{}" text-anchor="middle">{}</text>"#, HEIGHT - b + 14.0, fmt_tick(v));
    }
    for v in nice_ticks(y0, y1, 5) {
        let y = py(v);
        let _ = writeln!(s, r##"<line x1="{l}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#ddd"/>"##, WIDTH - r);
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, l - 4.0, y + 4.0, fmt_tick(v));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 8.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{0}" text-anchor="middle" transform="rotate(-90 14 {0})">{1}</text>"#,
        HEIGHT / 2.0,
        escape(y_label)
    );
    for h in hlines.iter().filter(|h| h.y.is_finite()) {
        let y = py(h.y);
        let _ = writeln!(
            s,
            r#"<line x1="{l}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="black" stroke-dasharray="2,3"/>"#,
            WIDTH - r
        );
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, WIDTH - r - 2.0, y - 3.0, escape(&h.label));
    }
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if let Some(spread) = &ser.spread {
            let pts: Vec<(f64, f64, f64)> = ser
                .points
                .iter()
                .zip(spread)
                .filter(|(p, d)| finite(p) && d.is_finite())
                .map(|(p, d)| (p.0, p.1, *d))
                .collect();
            if pts.len() > 1 {
                let mut poly: Vec<String> = pts.iter().map(|(x, y, d)| format!("{:.1},{:.1}", px(*x), py(y + d))).collect();
                poly.extend(pts.iter().rev().map(|(x, y, d)| format!("{:.1},{:.1}", px(*x), py(y - d))));
                let _ = writeln!(s, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, poly.join(" "));
            }
        }
        for run in ser.points.split(|p| !finite(p)).filter(|r| !r.is_empty()) {
            let pts: Vec<String> = run.iter().map(|(x, y)| format!("{:.1},{:.1}", px(*x), py(*y))).collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                pts.join(" ")
            );
        }
        let ly = t + 14.0 + 14.0 * i as f64;
        let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, l + 8.0, l + 24.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, l + 28.0, ly + 4.0, escape(&ser.name));
    }
    s.push_str("</svg>\n");
    s
}
