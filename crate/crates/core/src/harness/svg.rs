//! Minimal self-contained SVG line charts with a logarithmic x axis.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct Series {
    pub name: String,
    /// `(x, y)`; `x = +∞` is drawn at the right edge of the axis.
    pub points: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders `series` over a log-scaled x axis and a `[0, 1]` y axis.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let finite: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .filter(|x| x.is_finite() && *x > 0.0)
        .collect();
    let has_inf = series.iter().any(|s| s.points.iter().any(|p| p.0 == f64::INFINITY));
    let (mut lo, mut hi) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x.log10()), b.max(x.log10())));
    if finite.is_empty() {
        (lo, hi) = (0.0, 1.0);
    } else if hi - lo < 1e-9 {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    // With an ∞ point, the finite range occupies the left 80% of the axis.
    let span = if has_inf { 0.8 } else { 1.0 };
    let inf_x = LEFT + plot_w;
    let px = |x: f64| -> f64 {
        if x == f64::INFINITY {
            inf_x
        } else if finite.is_empty() {
            LEFT + plot_w / 2.0
        } else {
            LEFT + (x.log10() - lo) / (hi - lo) * plot_w * span
        }
    };
    let py = |y: f64| TOP + (1.0 - y.clamp(0.0, 1.0)) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, LEFT + plot_w / 2.0, escape(title));
    // Axes.
    let _ = writeln!(
        s,
        r#"<path d="M{LEFT},{TOP} V{} H{}" fill="none" stroke="black"/>"#,
        TOP + plot_h,
        LEFT + plot_w
    );
    for i in 0..=5 {
        let y = i as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{y0}" x2="{LEFT}" y2="{y0}" stroke="black"/><text x="{}" y="{}" text-anchor="end">{y:.1}</text>"#,
            LEFT - 4.0,
            LEFT - 6.0,
            py(y) + 4.0,
            y0 = py(y)
        );
    }
    let mut ticks: Vec<f64> = finite.clone();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for &x in &ticks {
        let _ = writeln!(
            s,
            r#"<line x1="{x0}" y1="{b}" x2="{x0}" y2="{}" stroke="black"/><text x="{x0}" y="{}" text-anchor="middle">{x}</text>"#,
            TOP + plot_h + 4.0,
            TOP + plot_h + 18.0,
            x0 = px(x),
            b = TOP + plot_h
        );
    }
    if has_inf {
        let _ = writeln!(
            s,
            r#"<line x1="{inf_x}" y1="{b}" x2="{inf_x}" y2="{}" stroke="black"/><text x="{inf_x}" y="{}" text-anchor="middle">∞</text>"#,
            TOP + plot_h + 4.0,
            TOP + plot_h + 18.0,
            b = TOP + plot_h
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{} (log scale)</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(y_label)
    );
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut pts: Vec<(f64, f64)> = ser.points.iter().map(|&(x, y)| (px(x), py(y))).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, coords.join(" "));
        for (x, y) in &pts {
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#);
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = LEFT + plot_w + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 25.0,
            ly + 4.0,
            escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}
