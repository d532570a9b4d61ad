//! Minimal static SVG line charts with an interval ribbon.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;

/// Posterior mean line over a shaded interval, with a dashed zero line.
pub fn ribbon_chart(title: &str, x_label: &str, x: &[f64], mean: &[f64], lower: &[f64], upper: &[f64]) -> String {
    let finite = |v: &&f64| v.is_finite();
    let x_min = x.iter().filter(finite).cloned().fold(f64::INFINITY, f64::min);
    let x_max = x.iter().filter(finite).cloned().fold(f64::NEG_INFINITY, f64::max);
    let y_min = lower.iter().chain(mean).filter(finite).cloned().fold(0.0, f64::min);
    let y_max = upper.iter().chain(mean).filter(finite).cloned().fold(0.0, f64::max);
    let x_span = if x_max > x_min { x_max - x_min } else { 1.0 };
    let y_span = if y_max > y_min { y_max - y_min } else { 1.0 };
    let px = |v: f64| MARGIN + (v - x_min) / x_span * (WIDTH - 2.0 * MARGIN);
    let py = |v: f64| HEIGHT - MARGIN - (v - y_min) / y_span * (HEIGHT - 2.0 * MARGIN);

    let mut ribbon = String::new();
    for (&xv, &u) in x.iter().zip(upper) {
        let _ = write!(ribbon, "{:.2},{:.2} ", px(xv), py(u));
    }
    for (&xv, &l) in x.iter().zip(lower).rev() {
        let _ = write!(ribbon, "{:.2},{:.2} ", px(xv), py(l));
    }
    let mut line = String::new();
    for (&xv, &m) in x.iter().zip(mean) {
        let _ = write!(line, "{:.2},{:.2} ", px(xv), py(m));
    }

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="25" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(svg, r##"<polygon points="{}" fill="#9ecae1" fill-opacity="0.6"/>"##, ribbon.trim_end());
    let _ = writeln!(
        svg,
        r#"<line x1="{MARGIN}" x2="{}" y1="{y0:.2}" y2="{y0:.2}" stroke="gray" stroke-dasharray="4 3"/>"#,
        WIDTH - MARGIN,
        y0 = py(0.0)
    );
    let _ = writeln!(svg, r##"<polyline points="{}" fill="none" stroke="#08519c" stroke-width="2"/>"##, line.trim_end());
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    for (v, anchor, xpos) in [(x_min, "start", MARGIN), (x_max, "end", WIDTH - MARGIN)] {
        let _ = writeln!(
            svg,
            r#"<text x="{xpos}" y="{}" text-anchor="{anchor}" font-family="sans-serif" font-size="11">{}</text>"#,
            HEIGHT - MARGIN + 15.0,
            short(v)
        );
    }
    for (v, ypos) in [(y_min, HEIGHT - MARGIN), (y_max, MARGIN + 10.0)] {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{ypos}" text-anchor="end" font-family="sans-serif" font-size="11">{}</text>"#,
            MARGIN - 4.0,
            short(v)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    svg.push_str("</svg>\n");
    svg
}

fn short(v: f64) -> String {
    format!("{v:.3}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
