//! Minimal static SVG bar charts for reports.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Vertical bars scaled to the largest value (or 1 when all are ≤ 1).
pub fn bar_chart(title: &str, bars: &[(String, f64)]) -> String {
    let max = bars
        .iter()
        .map(|b| b.1)
        .filter(|v| v.is_finite())
        .fold(1.0_f64, f64::max);
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let slot = plot_w / bars.len().max(1) as f64;
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="10">"#
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    )
    .unwrap();
    let base = HEIGHT - MARGIN;
    writeln!(
        svg,
        r#"<line x1="{MARGIN}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#,
        WIDTH - MARGIN
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#,
        MARGIN - 4.0,
        MARGIN + 4.0,
        max
    )
    .unwrap();
    for (i, (label, value)) in bars.iter().enumerate() {
        let v = if value.is_finite() { value.max(0.0) } else { 0.0 };
        let h = plot_h * v / max;
        let x = MARGIN + slot * i as f64 + slot * 0.15;
        let w = slot * 0.7;
        writeln!(
            svg,
            r##"<rect x="{x:.2}" y="{:.2}" width="{w:.2}" height="{h:.2}" fill="#4a78b0"/>"##,
            base - h
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{value:.3}</text>"#,
            x + w / 2.0,
            base - h - 3.0
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            x + w / 2.0,
            base + 14.0,
            escape(label)
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

/// Two-column CSV of the same data.
pub fn bar_csv(header: (&str, &str), bars: &[(String, f64)]) -> String {
    let mut out = format!("{},{}\n", header.0, header.1);
    for (label, value) in bars {
        writeln!(out, "{label},{value}").unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_has_one_rect_per_bar() {
        let svg = bar_chart("a < b", &[("x".into(), 0.5), ("y".into(), 2.0)]);
        assert_eq!(svg.matches("<rect").count(), 2);
        assert!(svg.contains("a &lt; b"));
        assert!(svg.ends_with("</svg>\n"));
    }
}
