use std::fmt::Write as _;

/// One polyline of a [`line_chart`].
pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub x: &'a [f64],
    pub y: &'a [f64],
}

const W: f64 = 900.0;
const H: f64 = 360.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const MAX_POINTS: usize = 4000;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn bounds<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

/// Renders a static SVG line chart with axis extents and a legend.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (x0, x1) = bounds(series.iter().flat_map(|s| s.x));
    let (y0, y1) = bounds(series.iter().flat_map(|s| s.y));
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
    );
    for (v, anchor, x) in [(x0, "start", LEFT), (x1, "end", LEFT + pw)] {
        let _ = writeln!(s, r#"<text x="{x}" y="{}" text-anchor="{anchor}">{}</text>"#, TOP + ph + 16.0, fmt_tick(v));
    }
    for (v, y) in [(y0, TOP + ph), (y1, TOP + 10.0)] {
        let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end">{}</text>"#, LEFT - 6.0, fmt_tick(v));
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        H - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(y_label)
    );
    for (k, ser) in series.iter().enumerate() {
        let n = ser.x.len().min(ser.y.len());
        let step = n.div_ceil(MAX_POINTS).max(1);
        let mut points = String::new();
        for i in (0..n).step_by(step) {
            if ser.x[i].is_finite() && ser.y[i].is_finite() {
                let _ = write!(points, "{:.1},{:.1} ", px(ser.x[i]), py(ser.y[i]));
            }
        }
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.2" points="{}"/>"#,
            escape(ser.color),
            points.trim_end()
        );
        let ly = TOP + 14.0 + 16.0 * k as f64;
        let lx = LEFT + pw - 150.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{}" x2="{}" y2="{}" stroke="{}" stroke-width="2"/><text x="{}" y="{ly}">{}</text>"#,
            ly - 4.0,
            lx + 20.0,
            ly - 4.0,
            escape(ser.color),
            lx + 26.0,
            escape(ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}
