//! Hand-written SVG line charts of the experiment log.
//!
//! Output depends only on the records: fixed layout, fixed palette and
//! fixed-precision number formatting, so identical logs give identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use fedinfo_core::probe::{AggregationRecord, ModelKind};
use fedinfo_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error("no records")]
    NoRecords,
    #[error(transparent)]
    Core(#[from] Error),
}

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 52.0;
const PALETTE: &[&str] = &[
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub dashed: bool,
    pub points: Vec<(f64, f64)>,
}

/// One series per (model kind, probe dataset), x = aggregation index. NaN
/// values (skipped measurements) are dropped.
pub fn series_by_model(
    records: &[AggregationRecord],
    value: impl Fn(&AggregationRecord) -> f64,
) -> Vec<Series> {
    let mut groups: BTreeMap<(ModelKind, usize), Vec<(f64, f64)>> = BTreeMap::new();
    for r in records {
        let points = groups.entry((r.model_kind, r.probe_dataset)).or_default();
        let v = value(r);
        if v.is_finite() {
            points.push((r.round as f64, v));
        }
    }
    groups
        .into_iter()
        .map(|((kind, k), mut points)| {
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series {
                label: format!("{kind} on D{k}"),
                dashed: kind == ModelKind::Global,
                points,
            }
        })
        .collect()
}

/// Roughly five round-valued ticks covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil();
    let last = (hi / step).floor();
    (first as i64..=last as i64)
        .map(|i| i as f64 * step)
        .collect()
}

fn fmt_num(v: f64) -> String {
    let s = format!("{v:.2}");
    s.parse::<f64>().map(|x| x.to_string()).unwrap_or(s)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Renders a line chart. Single-point series show as markers.
pub fn line_chart(title: &str, y_label: &str, series: &[Series]) -> String {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) = (f64::MAX, f64::MIN, 0.0f64, f64::MIN);
    for &(x, y) in pts {
        x_lo = x_lo.min(x);
        x_hi = x_hi.max(x);
        y_lo = y_lo.min(y);
        y_hi = y_hi.max(y);
    }
    if x_lo > x_hi {
        (x_lo, x_hi, y_hi) = (0.0, 1.0, 1.0);
    }
    if x_hi - x_lo < 1.0 {
        x_hi = x_lo + 1.0;
    }
    if y_hi - y_lo < 1e-9 {
        y_hi = y_lo + 1.0;
    }
    y_hi += 0.05 * (y_hi - y_lo);

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |y: f64| TOP + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    );

    for t in ticks(y_lo, y_hi) {
        let y = sy(t);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#e0e0e0"/>"##,
            LEFT + plot_w
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            y + 4.0,
            fmt_num(t)
        );
    }
    for t in ticks(x_lo, x_hi).into_iter().filter(|t| t.fract() == 0.0) {
        let x = sx(t);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#444"/>"##,
            TOP + plot_h,
            TOP + plot_h + 4.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            TOP + plot_h + 18.0,
            fmt_num(t)
        );
    }
    let _ = writeln!(
        s,
        r##"<rect x="{LEFT:.1}" y="{TOP:.1}" width="{plot_w:.1}" height="{plot_h:.1}" fill="none" stroke="#444"/>"##
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">aggregation index</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(y_label)
    );

    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let dash = if ser.dashed {
            r#" stroke-dasharray="6 3""#
        } else {
            ""
        };
        if ser.points.len() > 1 {
            let path: Vec<String> = ser
                .points
                .iter()
                .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.6"{dash}/>"#,
                path.join(" ")
            );
        } else if let Some(&(x, y)) = ser.points.first() {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#,
                sx(x),
                sy(y)
            );
        }
        let ly = TOP + 12.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 14.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"{dash}/>"#,
            lx + 24.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 30.0,
            ly + 4.0,
            escape(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `mi_zx.svg`, `mi_zy.svg` and `accuracy.svg` into `dir`.
pub fn render_all(records: &[AggregationRecord], dir: &Path) -> Result<(), PlotError> {
    if records.is_empty() {
        return Err(PlotError::NoRecords);
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let charts = [
        (
            "mi_zx.svg",
            "MI(Z;X)",
            "nats",
            series_by_model(records, |r| r.mi_zx_nats),
        ),
        (
            "mi_zy.svg",
            "MI(Z;Y)",
            "nats",
            series_by_model(records, |r| r.mi_zy_nats),
        ),
        (
            "accuracy.svg",
            "Accuracy",
            "accuracy",
            series_by_model(records, |r| r.accuracy),
        ),
    ];
    for (file, title, y_label, series) in charts {
        let path = dir.join(file);
        fs::write(&path, line_chart(title, y_label, &series)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
