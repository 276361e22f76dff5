//! Deterministic SVG figures.
//!
//! Output depends only on the input values: fixed 640x480 viewport, fixed
//! colors, coordinates printed with two decimals.

use std::fmt::Write;

use crate::analysis::LengthHistogram;

pub const WIDTH: f64 = 640.0;
pub const HEIGHT: f64 = 480.0;
pub const MEMORIZED_COLOR: &str = "#1f77b4";
pub const NON_MEMORIZED_COLOR: &str = "#f2b701";

const MARGIN: f64 = 50.0;

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn open(title: &str) -> String {
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .unwrap();
    writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="{:.2}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    )
    .unwrap();
    svg
}

fn legend(svg: &mut String) {
    for (i, (label, color)) in [
        ("memorized", MEMORIZED_COLOR),
        ("non-memorized", NON_MEMORIZED_COLOR),
    ]
    .iter()
    .enumerate()
    {
        let y = 44.0 + 16.0 * i as f64;
        writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{y:.2}" r="4" fill="{color}"/><text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">{label}</text>"#,
            WIDTH - 140.0,
            WIDTH - 130.0,
            y + 4.0
        )
        .unwrap();
    }
}

/// Maps `[lo, hi]` onto `[a, b]`; a degenerate range maps to the midpoint.
fn scale(v: f64, lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    if hi > lo {
        a + (v - lo) / (hi - lo) * (b - a)
    } else {
        (a + b) / 2.0
    }
}

/// Scatter of the first two projection columns, colored by group. A single
/// column is drawn along the horizontal axis.
pub fn pca_scatter(title: &str, projections: &[Vec<f64>], memorized: &[bool]) -> String {
    let mut svg = open(title);
    let xy: Vec<(f64, f64)> = projections
        .iter()
        .map(|p| {
            (
                p.first().copied().unwrap_or(0.0),
                p.get(1).copied().unwrap_or(0.0),
            )
        })
        .collect();
    let bounds = |f: fn(&(f64, f64)) -> f64| {
        xy.iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
    };
    let (x_lo, x_hi) = bounds(|p| p.0);
    let (y_lo, y_hi) = bounds(|p| p.1);
    writeln!(
        svg,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{:.2}" height="{:.2}" fill="none" stroke="#888"/>"##,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">PC1</text>"#,
        WIDTH / 2.0,
        HEIGHT - 18.0
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="16" y="{:.2}" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {:.2})" text-anchor="middle">PC2</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    )
    .unwrap();
    for (&(x, y), &m) in xy.iter().zip(memorized) {
        let cx = scale(x, x_lo, x_hi, MARGIN + 8.0, WIDTH - MARGIN - 8.0);
        let cy = scale(y, y_lo, y_hi, HEIGHT - MARGIN - 8.0, MARGIN + 8.0);
        let color = if m {
            MEMORIZED_COLOR
        } else {
            NON_MEMORIZED_COLOR
        };
        writeln!(
            svg,
            r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="3" fill="{color}" fill-opacity="0.8"/>"#
        )
        .unwrap();
    }
    legend(&mut svg);
    svg.push_str("</svg>\n");
    svg
}

/// Side-by-side bar charts of the non-memorized ratio per length bin.
pub fn length_ratio_bars(title: &str, histograms: &[LengthHistogram]) -> String {
    let mut svg = open(title);
    let panels = histograms.len().max(1) as f64;
    let panel_w = (WIDTH - MARGIN) / panels;
    let top = MARGIN;
    let bottom = HEIGHT - MARGIN;
    for (p, hist) in histograms.iter().enumerate() {
        let left = MARGIN / 2.0 + p as f64 * panel_w + 10.0;
        let inner = panel_w - 20.0;
        writeln!(
            svg,
            r#"<line x1="{left:.2}" y1="{bottom:.2}" x2="{:.2}" y2="{bottom:.2}" stroke="black"/>"#,
            left + inner
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">{} (non-memorized ratio)</text>"#,
            left + inner / 2.0,
            HEIGHT - 14.0,
            hist.axis.as_str()
        )
        .unwrap();
        let n = hist.bins.len().max(1) as f64;
        let slot = inner / n;
        for (i, bin) in hist.bins.iter().enumerate() {
            let h = bin.non_memorized_ratio * (bottom - top);
            let x = left + i as f64 * slot + slot * 0.1;
            writeln!(
                svg,
                r#"<rect x="{x:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="{NON_MEMORIZED_COLOR}"/>"#,
                bottom - h,
                slot * 0.8
            )
            .unwrap();
            writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="middle">{}</text>"#,
                x + slot * 0.4,
                bottom + 12.0,
                bin.value
            )
            .unwrap();
        }
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{LengthAxis, LengthBin};

    #[test]
    fn scatter_is_deterministic_and_colored() {
        let proj = vec![vec![0.0, 1.0], vec![2.0, -1.0], vec![1.0, 0.0]];
        let a = pca_scatter("t & <x>", &proj, &[true, false, true]);
        assert_eq!(a, pca_scatter("t & <x>", &proj, &[true, false, true]));
        assert!(a.contains(r#"viewBox="0 0 640 480""#));
        assert!(a.contains("t &amp; &lt;x&gt;"));
        assert_eq!(
            a.matches(&format!(r#"r="3" fill="{MEMORIZED_COLOR}""#))
                .count(),
            2
        );
        assert_eq!(
            a.matches(&format!(r#"r="3" fill="{NON_MEMORIZED_COLOR}""#))
                .count(),
            1
        );
        assert!(a.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn bars_scale_with_ratio() {
        let hist = LengthHistogram {
            axis: LengthAxis::ContextWords,
            bins: vec![
                LengthBin {
                    value: 2,
                    memorized_count: 1,
                    non_memorized_count: 1,
                    non_memorized_ratio: 0.5,
                },
                LengthBin {
                    value: 4,
                    memorized_count: 1,
                    non_memorized_count: 0,
                    non_memorized_ratio: 0.0,
                },
            ],
        };
        let svg = length_ratio_bars("len", &[hist]);
        assert!(svg.contains(r#"height="190.00""#));
        assert!(svg.contains(r#"height="0.00""#));
    }
}
