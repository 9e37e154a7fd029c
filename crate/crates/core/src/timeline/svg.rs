use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{TimelineError, TimelineSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChartKind {
    StackedArea,
    Line,
}

impl ChartKind {
    pub fn parse(raw: &str) -> Option<Self> {
        match raw {
            "stacked-area" => Some(ChartKind::StackedArea),
            "line" => Some(ChartKind::Line),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartOptions {
    pub kind: ChartKind,
    pub width: u32,
    pub height: u32,
    pub title: String,
    /// Plot per-day shares instead of counts.
    pub proportions: bool,
}

impl Default for ChartOptions {
    fn default() -> Self {
        ChartOptions {
            kind: ChartKind::StackedArea,
            width: 900,
            height: 420,
            title: String::new(),
            proportions: false,
        }
    }
}

const PALETTE: [&str; 10] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
];

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Renders the series as a standalone SVG document: one `<path>` per
/// series, axes as `<line>`s and a legend of `<rect>` swatches.
pub fn render_svg(series: &TimelineSeries, opts: &ChartOptions) -> Result<String, TimelineError> {
    if series.buckets().is_empty() || series.keys().is_empty() {
        return Err(TimelineError::Empty);
    }
    let keys = series.keys();
    let n = series.buckets().len();
    let (w, h) = (opts.width.max(200) as f64, opts.height.max(150) as f64);
    let legend_w = 170.0;
    let (left, right, top, bottom) = (56.0, w - legend_w, 36.0, h - 40.0);

    let values: Vec<Vec<f64>> = keys
        .iter()
        .map(|k| {
            series
                .buckets()
                .iter()
                .map(|b| {
                    if opts.proportions {
                        b.proportion(k)
                    } else {
                        b.counts.get(k).copied().unwrap_or(0) as f64
                    }
                })
                .collect()
        })
        .collect();
    let y_max = match opts.kind {
        ChartKind::StackedArea => (0..n).map(|i| values.iter().map(|v| v[i]).sum::<f64>()).fold(0.0, f64::max),
        ChartKind::Line => values.iter().flatten().copied().fold(0.0, f64::max),
    };
    let y_max = if y_max > 0.0 { y_max } else { 1.0 };
    let x = |i: usize| {
        if n == 1 {
            (left + right) / 2.0
        } else {
            left + (right - left) * i as f64 / (n - 1) as f64
        }
    };
    let y = |v: f64| bottom - (bottom - top) * v / y_max;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        w, h, w, h
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    if !opts.title.is_empty() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="22" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
            (left + right) / 2.0,
            esc(&opts.title)
        );
    }

    let _ = writeln!(s, r#"<g class="series">"#);
    let mut base = vec![0.0; n];
    for (si, key) in keys.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let mut d = String::new();
        match opts.kind {
            ChartKind::StackedArea => {
                let upper: Vec<f64> = (0..n).map(|i| base[i] + values[si][i]).collect();
                for i in 0..n {
                    let _ = write!(d, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, x(i), y(upper[i]));
                }
                for i in (0..n).rev() {
                    let _ = write!(d, "L{:.2},{:.2} ", x(i), y(base[i]));
                }
                d.push('Z');
                let _ = writeln!(
                    s,
                    r#"<path d="{d}" fill="{color}" fill-opacity="0.85" stroke="{color}" stroke-width="0.5"><title>{}</title></path>"#,
                    esc(key)
                );
                base = upper;
            }
            ChartKind::Line => {
                for i in 0..n {
                    let _ = write!(d, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, x(i), y(values[si][i]));
                }
                let d = d.trim_end();
                let _ = writeln!(
                    s,
                    r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="2"><title>{}</title></path>"#,
                    esc(key)
                );
            }
        }
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g class="axes" stroke="black" stroke-width="1">"#);
    let _ = writeln!(s, r#"<line x1="{left:.2}" y1="{bottom:.2}" x2="{right:.2}" y2="{bottom:.2}"/>"#);
    let _ = writeln!(s, r#"<line x1="{left:.2}" y1="{top:.2}" x2="{left:.2}" y2="{bottom:.2}"/>"#);
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g class="labels" font-family="sans-serif" font-size="11">"#);
    let mut ticks = vec![0, n / 2, n - 1];
    ticks.dedup();
    for i in ticks {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            x(i),
            bottom + 16.0,
            series.buckets()[i].date
        );
    }
    let max_label = if opts.proportions { format!("{y_max:.2}") } else { format!("{y_max}") };
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, left - 6.0, top + 4.0, max_label);
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">0</text>"#, left - 6.0, bottom + 4.0);
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g class="legend" font-family="sans-serif" font-size="12">"#);
    for (si, key) in keys.iter().enumerate() {
        let ly = top + 18.0 * si as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="12" height="12" fill="{}"/>"#,
            right + 16.0,
            ly,
            PALETTE[si % PALETTE.len()]
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, right + 34.0, ly + 10.0, esc(key));
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_chart(series: &TimelineSeries, path: &Path, opts: &ChartOptions) -> Result<(), TimelineError> {
    let svg = render_svg(series, opts)?;
    fs::write(path, svg).map_err(|source| TimelineError::Io {
        path: path.display().to_string(),
        source,
    })
}
