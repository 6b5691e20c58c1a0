//! Line plots as plain SVG.

use std::fmt::Write;
use std::path::Path;

use crate::error::{CliError, Result};
use crate::io::write_atomic;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 40.0;
const LEGEND_WIDTH: f64 = 160.0;

/// Cycled when there are more series than colors.
pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// One polyline per series on a shared axis range, with a legend.
pub fn render_svg(series: &[Series], title: &str) -> Result<String> {
    if series.is_empty() || series.iter().any(|s| s.values.is_empty()) {
        return Err(CliError::Data("nothing to plot: empty series".into()));
    }
    if series.iter().flat_map(|s| &s.values).any(|v| !v.is_finite()) {
        return Err(CliError::Data("cannot plot non-finite values".into()));
    }
    let lo = series.iter().flat_map(|s| &s.values).copied().fold(f64::INFINITY, f64::min);
    let hi = series.iter().flat_map(|s| &s.values).copied().fold(f64::NEG_INFINITY, f64::max);
    let longest = series.iter().map(|s| s.values.len()).max().unwrap_or(1);

    let plot_w = WIDTH - 2.0 * MARGIN - LEGEND_WIDTH;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let x_of = |i: usize| {
        if longest > 1 {
            MARGIN + plot_w * i as f64 / (longest - 1) as f64
        } else {
            MARGIN + plot_w / 2.0
        }
    };
    // A flat range draws on the vertical midline.
    let y_of = |v: f64| {
        if hi > lo {
            MARGIN + plot_h * (hi - v) / (hi - lo)
        } else {
            MARGIN + plot_h / 2.0
        }
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}">"#
    );
    let _ = writeln!(svg, r##"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##);
    let _ = writeln!(
        svg,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#888888"/>"##
    );
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN}" y="{:.2}" font-family="sans-serif" font-size="14">{}</text>"#,
        MARGIN - 12.0,
        escape(title)
    );
    for (v, y) in [(hi, MARGIN), (lo, MARGIN + plot_h)] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="end">{}</text>"#,
            MARGIN - 4.0,
            y + 3.0,
            format_tick(v)
        );
    }
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = s
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| format!("{:.2},{:.2}", x_of(i), y_of(v)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let ly = MARGIN + 16.0 * k as f64 + 8.0;
        let lx = WIDTH - LEGEND_WIDTH;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 18.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11">{}</text>"#,
            lx + 24.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn format_tick(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-3) {
        format!("{v:.3e}")
    } else {
        format!("{v:.3}")
    }
}

pub fn plot_series(series: &[Series], title: &str, path: &Path) -> Result<()> {
    write_atomic(path, render_svg(series, title)?.as_bytes())
}
