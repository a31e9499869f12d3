//! Minimal standalone SVG charts for study reports.

use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn legend(out: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = 34.0 + 14.0 * i as f64;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
            WIDTH - 170.0,
            y - 9.0,
            WIDTH - 155.0,
            y,
            escape(name)
        );
    }
}

fn axes(out: &mut String, lo: f64, hi: f64) {
    let (x0, y0, y1) = (MARGIN, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(
        out,
        r#"<path d="M{x0} {y1} V{y0} H{}" stroke="black" fill="none"/>"#,
        WIDTH - MARGIN / 2.0
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let y = y0 - (y0 - y1) * k as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            x0 - 4.0,
            y + 4.0,
            format_tick(v)
        );
    }
}

fn format_tick(v: f64) -> String {
    if v.abs() >= 1000.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn value_range<'a>(values: impl Iterator<Item = &'a f64>, from_zero: bool) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if from_zero {
        lo = lo.min(0.0);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi <= lo {
        hi = lo + 1.0;
    }
    (lo, hi)
}

/// Grouped bar chart: one group per category, one bar per series.
pub fn bar_chart(title: &str, categories: &[String], series: &[(&str, &[f64])]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let (lo, hi) = value_range(series.iter().flat_map(|(_, v)| v.iter()), true);
    axes(&mut out, lo, hi);
    let plot_w = WIDTH - 1.5 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let group = plot_w / categories.len().max(1) as f64;
    let bar = group * 0.8 / series.len().max(1) as f64;
    for (c, name) in categories.iter().enumerate() {
        let gx = MARGIN + group * c as f64 + group * 0.1;
        for (s, (_, values)) in series.iter().enumerate() {
            let Some(&v) = values.get(c) else { continue };
            let h = plot_h * (v - lo) / (hi - lo);
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"><title>{}: {v}</title></rect>"#,
                gx + bar * s as f64,
                HEIGHT - MARGIN - h,
                bar,
                h,
                PALETTE[s % PALETTE.len()],
                escape(name)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{}" text-anchor="end" transform="rotate(-35 {:.2} {})">{}</text>"#,
            gx + group * 0.4,
            HEIGHT - MARGIN + 14.0,
            gx + group * 0.4,
            HEIGHT - MARGIN + 14.0,
            escape(name)
        );
    }
    legend(&mut out, &series.iter().map(|(n, _)| *n).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

/// Line chart of several series sharing the x values.
pub fn line_chart(title: &str, x: &[f64], series: &[(&str, &[f64])]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let (lo, hi) = value_range(series.iter().flat_map(|(_, v)| v.iter()), false);
    let (xlo, xhi) = value_range(x.iter(), false);
    axes(&mut out, lo, hi);
    let plot_w = WIDTH - 1.5 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    for (s, (_, values)) in series.iter().enumerate() {
        let mut path = String::new();
        for (i, (xv, yv)) in x.iter().zip(values.iter()).enumerate() {
            let px = MARGIN + plot_w * (xv - xlo) / (xhi - xlo);
            let py = HEIGHT - MARGIN - plot_h * (yv - lo) / (hi - lo);
            let _ = write!(path, "{}{px:.2} {py:.2}", if i == 0 { "M" } else { " L" });
        }
        let _ = writeln!(
            out,
            r#"<path d="{path}" stroke="{}" fill="none" stroke-width="1.5"/>"#,
            PALETTE[s % PALETTE.len()]
        );
    }
    for k in 0..=4 {
        let v = xlo + (xhi - xlo) * k as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            MARGIN + plot_w * k as f64 / 4.0,
            HEIGHT - MARGIN + 16.0,
            format_tick(v)
        );
    }
    legend(&mut out, &series.iter().map(|(n, _)| *n).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_well_formed() {
        let bars = bar_chart("PT", &["MG-I & II".to_string()], &[("a", &[0.1]), ("b", &[0.2])]);
        assert!(bars.starts_with("<svg") && bars.ends_with("</svg>\n"));
        assert!(bars.contains("MG-I &amp; II"));
        assert_eq!(bars.matches("<rect").count(), 1 + 2 + 2);
        let lines = line_chart("f", &[0.0, 1.0, 2.0], &[("x", &[1.0, 1.0, 1.0])]);
        assert!(lines.contains("M56.00"));
    }
}
