//! Minimal SVG charts. Every chart is written next to the CSV or JSON it
//! was drawn from, so these only need to be readable, not precise.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, title: &str, height: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

/// Line chart of named series sharing the x axis `1..=n`.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[(&str, &[f64])]) -> String {
    let mut out = String::new();
    header(&mut out, title, HEIGHT);
    let n = series.iter().map(|(_, s)| s.len()).max().unwrap_or(0).max(2);
    let (lo, hi) = bounds(series.iter().flat_map(|(_, s)| s.iter().copied()));
    let px = |i: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * i as f64 / (n - 1) as f64;
    let py = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - lo) / (hi - lo);
    axes(&mut out, HEIGHT, x_label, y_label, lo, hi);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{n}</text>"#, WIDTH - MARGIN, HEIGHT - MARGIN + 16.0);
    for (k, (name, s)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = s
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, &v)| format!("{:.2},{:.2}", px(i), py(v)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            MARGIN + 8.0,
            MARGIN + 14.0 * (k as f64 + 1.0),
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn axes(out: &mut String, height: f64, x_label: &str, y_label: &str, lo: f64, hi: f64) {
    let (x0, y0) = (MARGIN, height - MARGIN);
    let _ = writeln!(
        out,
        r#"<path d="M{x0},{MARGIN} L{x0},{y0} L{},{y0}" stroke="black" fill="none"/>"#,
        WIDTH - MARGIN
    );
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, height - 16.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        height / 2.0,
        height / 2.0,
        escape(y_label)
    );
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{lo:.3}</text>"#, x0 - 4.0, y0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{hi:.3}</text>"#, x0 - 4.0, MARGIN + 4.0);
}

/// Horizontal bar chart, one bar per label, in the given order. Negative
/// values extend left of the zero line.
pub fn bar_chart(title: &str, labels: &[String], values: &[f64]) -> String {
    let mut out = String::new();
    let row = 22.0;
    let height = 2.0 * MARGIN + row * labels.len().max(1) as f64;
    header(&mut out, title, height);
    let left = 180.0;
    let span = WIDTH - left - MARGIN;
    let max_abs = values.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-12);
    let any_neg = values.iter().any(|&v| v < 0.0);
    let zero = if any_neg { left + span / 2.0 } else { left };
    let scale = if any_neg { span / 2.0 } else { span } / max_abs;
    for (i, (label, &v)) in labels.iter().zip(values).enumerate() {
        let y = MARGIN + row * i as f64;
        let (x, w) = if v >= 0.0 { (zero, v * scale) } else { (zero + v * scale, -v * scale) };
        let color = if v >= 0.0 { PALETTE[0] } else { PALETTE[1] };
        let _ = writeln!(out, r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{}" fill="{color}"/>"#, row - 4.0);
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, left - 6.0, y + row - 8.0, escape(label));
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">{v:.4}</text>"#, (x + w).max(zero) + 4.0, y + row - 8.0);
    }
    let _ = writeln!(
        out,
        r#"<line x1="{zero}" y1="{}" x2="{zero}" y2="{}" stroke="black"/>"#,
        MARGIN - 4.0,
        height - MARGIN
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_well_formed() {
        let svg = line_chart("loss", "epoch", "value", &[("train", &[1.0, 0.5, 0.25]), ("val", &[1.0, 0.7, f64::NAN])]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        let svg = bar_chart("top <features>", &["a".into(), "b".into()], &[0.3, -0.1]);
        assert!(svg.contains("&lt;features&gt;"));
        assert_eq!(svg.matches("<rect").count(), 3);
    }
}
