//! Static SVG plots of a median trace with a percentile band.

use std::fmt::Write as _;

use super::aggregate::Band;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    (0..=4).map(|k| lo + (hi - lo) * k as f64 / 4.0).collect()
}

/// Renders `band` against `queries`. An optional horizontal reference line
/// (e.g. the constraint boundary at 0) is drawn dashed.
pub fn band_svg(title: &str, y_label: &str, queries: &[u64], band: &Band, reference: Option<f64>) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    if queries.is_empty() {
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">no data</text>"#, WIDTH / 2.0, HEIGHT / 2.0);
        svg.push_str("</svg>\n");
        return svg;
    }
    let x_lo = queries[0] as f64;
    let x_hi = (*queries.last().unwrap() as f64).max(x_lo + 1.0);
    let finite = band.lower.iter().chain(&band.upper).chain(reference.iter()).filter(|v| v.is_finite());
    let (mut y_lo, mut y_hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if !y_lo.is_finite() {
        (y_lo, y_hi) = (0.0, 1.0);
    }
    if y_hi - y_lo < 1e-12 {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    let pad = 0.05 * (y_hi - y_lo);
    let (y_lo, y_hi) = (y_lo - pad, y_hi + pad);
    let px = |q: f64| MARGIN + (q - x_lo) / (x_hi - x_lo) * (WIDTH - 2.0 * MARGIN);
    let py = |v: f64| HEIGHT - MARGIN - (v - y_lo) / (y_hi - y_lo) * (HEIGHT - 2.0 * MARGIN);

    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    for v in ticks(x_lo, x_hi) {
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{v:.0}</text>"#, px(v), HEIGHT - MARGIN + 18.0);
    }
    for v in ticks(y_lo, y_hi) {
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.3}</text>"#, MARGIN - 6.0, py(v) + 4.0);
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">oracle calls</text>"#, WIDTH / 2.0, HEIGHT - 16.0);
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );

    let mut area = String::new();
    for (q, v) in queries.iter().zip(&band.upper) {
        let _ = write!(area, "{:.2},{:.2} ", px(*q as f64), py(*v));
    }
    for (q, v) in queries.iter().zip(&band.lower).rev() {
        let _ = write!(area, "{:.2},{:.2} ", px(*q as f64), py(*v));
    }
    let _ = writeln!(svg, r#"<polygon points="{}" fill="steelblue" fill-opacity="0.25" stroke="none"/>"#, area.trim_end());
    let line: Vec<String> = queries
        .iter()
        .zip(&band.median)
        .map(|(q, v)| format!("{:.2},{:.2}", px(*q as f64), py(*v)))
        .collect();
    let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#, line.join(" "));
    if let Some(r) = reference {
        let _ = writeln!(
            svg,
            r#"<line x1="{MARGIN}" x2="{}" y1="{y:.2}" y2="{y:.2}" stroke="crimson" stroke-dasharray="6 4"/>"#,
            WIDTH - MARGIN,
            y = py(r)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
