//! Report emitters. Every function here is a pure function of its input, so
//! repeated emission produces identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use lika_core::harness::{summary_csv, ExperimentReport};
use lika_core::{LikaError, MetricsReport, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Markdown,
    Svg,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Markdown => "md",
            Format::Svg => "svg",
        }
    }
}

impl std::str::FromStr for Format {
    type Err = LikaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "markdown" | "md" => Ok(Format::Markdown),
            "svg" => Ok(Format::Svg),
            other => Err(LikaError::Usage(format!(
                "unknown format {other:?}; allowed: csv, json, markdown, svg"
            ))),
        }
    }
}

pub fn emit_report(reports: &[ExperimentReport], format: Format) -> Result<String> {
    if reports.is_empty() {
        return Err(LikaError::Usage("no reports to emit".into()));
    }
    Ok(match format {
        Format::Csv => {
            let rows: Vec<_> = reports.iter().map(|r| r.summary_row()).collect();
            summary_csv(&rows)
        }
        Format::Json => {
            let mut s = serde_json::to_string_pretty(reports).expect("reports serialize");
            s.push('\n');
            s
        }
        Format::Markdown => markdown_table(reports),
        Format::Svg => svg_charts(reports),
    })
}

/// Groups reports by (method, dataset) in first-seen order.
fn group_by<K: Ord + Clone>(reports: &[ExperimentReport], key: impl Fn(&ExperimentReport) -> K) -> Vec<(K, Vec<&ExperimentReport>)> {
    let mut order = Vec::new();
    let mut groups: BTreeMap<K, Vec<&ExperimentReport>> = BTreeMap::new();
    for r in reports {
        let k = key(r);
        if !groups.contains_key(&k) {
            order.push(k.clone());
        }
        groups.entry(k).or_default().push(r);
    }
    order
        .into_iter()
        .map(|k| {
            let g = groups.remove(&k).unwrap_or_default();
            (k, g)
        })
        .collect()
}

/// One row per (method, dataset); metrics are averaged over seeds.
pub fn markdown_table(reports: &[ExperimentReport]) -> String {
    let mut out = String::from("| method | dataset | seeds |");
    for f in MetricsReport::FIELDS {
        let _ = write!(out, " {f} |");
    }
    out.push_str("\n|---|---|---|");
    for _ in MetricsReport::FIELDS {
        out.push_str("---|");
    }
    out.push('\n');
    for ((method, dataset), group) in group_by(reports, |r| (r.method.name().to_string(), r.dataset.clone())) {
        let n = group.len() as f64;
        let mut mean = [0.0; 9];
        for r in &group {
            for (m, v) in mean.iter_mut().zip(r.metrics.values()) {
                *m += v / n;
            }
        }
        let _ = write!(out, "| {method} | {dataset} | {} |", group.len());
        for v in mean {
            let _ = write!(out, " {v:.4} |");
        }
        out.push('\n');
    }
    out
}

const PALETTE: [&str; 9] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#17becf",
];
const CHART_W: f64 = 640.0;
const CHART_H: f64 = 320.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 130.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 40.0;
const TICKS: usize = 10;

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Per-epoch mean of `field` over the reports of one method, truncated to
/// the shortest trace.
fn mean_curve(group: &[&ExperimentReport], field: fn(&lika_core::models::EpochRecord) -> f64) -> Vec<(f64, f64)> {
    let len = group.iter().map(|r| r.trace.records.len()).min().unwrap_or(0);
    (0..len)
        .map(|i| {
            let epoch = group[0].trace.records[i].epoch as f64;
            let v = group.iter().map(|r| field(&r.trace.records[i])).sum::<f64>() / group.len() as f64;
            (epoch, v)
        })
        .filter(|(_, v)| v.is_finite())
        .collect()
}

fn axis_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn chart(out: &mut String, y0: f64, title: &str, curves: &[(String, Vec<(f64, f64)>)]) {
    let (x_lo, x_hi) = axis_range(curves.iter().flat_map(|(_, c)| c.iter().map(|p| p.0)));
    let (y_lo, y_hi) = axis_range(curves.iter().flat_map(|(_, c)| c.iter().map(|p| p.1)));
    let pw = CHART_W - MARGIN_L - MARGIN_R;
    let ph = CHART_H - MARGIN_T - MARGIN_B;
    let px = |x: f64| MARGIN_L + (x - x_lo) / (x_hi - x_lo) * pw;
    let py = |y: f64| y0 + MARGIN_T + (1.0 - (y - y_lo) / (y_hi - y_lo)) * ph;

    let _ = writeln!(out, r#"<g class="chart">"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="14" text-anchor="middle">{}</text>"#,
        MARGIN_L + pw / 2.0,
        y0 + 18.0,
        xml_escape(title)
    );
    for i in 0..=TICKS {
        let f = i as f64 / TICKS as f64;
        let gx = MARGIN_L + f * pw;
        let gy = y0 + MARGIN_T + (1.0 - f) * ph;
        let _ = writeln!(
            out,
            r##"<line x1="{gx:.1}" y1="{:.1}" x2="{gx:.1}" y2="{:.1}" stroke="#dddddd"/>"##,
            y0 + MARGIN_T,
            y0 + MARGIN_T + ph
        );
        let _ = writeln!(
            out,
            r##"<line x1="{MARGIN_L:.1}" y1="{gy:.1}" x2="{:.1}" y2="{gy:.1}" stroke="#dddddd"/>"##,
            MARGIN_L + pw
        );
        let _ = writeln!(
            out,
            r#"<text x="{gx:.1}" y="{:.1}" font-size="10" text-anchor="middle">{}</text>"#,
            y0 + MARGIN_T + ph + 14.0,
            format_tick(x_lo + f * (x_hi - x_lo))
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{}</text>"#,
            MARGIN_L - 4.0,
            gy + 3.0,
            format_tick(y_lo + f * (y_hi - y_lo))
        );
    }
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN_L:.1}" y="{:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="black"/>"#,
        y0 + MARGIN_T
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">epoch</text>"#,
        MARGIN_L + pw / 2.0,
        y0 + CHART_H - 6.0
    );
    for (k, (label, curve)) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = curve.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"><title>{}</title></polyline>"#,
            points.join(" "),
            xml_escape(label)
        );
        let ly = y0 + MARGIN_T + 12.0 + 16.0 * k as f64;
        let lx = MARGIN_L + pw + 10.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            lx + 18.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="11">{}</text>"#,
            lx + 22.0,
            ly + 4.0,
            xml_escape(label)
        );
    }
    out.push_str("</g>\n");
}

fn format_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Validation loss and validation ECE against epoch, one polyline per
/// method (seeds averaged).
pub fn svg_charts(reports: &[ExperimentReport]) -> String {
    let groups = group_by(reports, |r| r.method.name().to_string());
    let loss: Vec<_> = groups.iter().map(|(m, g)| (m.clone(), mean_curve(g, |r| r.val_loss))).collect();
    let ece: Vec<_> = groups.iter().map(|(m, g)| (m.clone(), mean_curve(g, |r| r.val_ece))).collect();
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{CHART_W}" height="{}" viewBox="0 0 {CHART_W} {}">"#,
        2.0 * CHART_H,
        2.0 * CHART_H
    );
    out.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);
    out.push('\n');
    chart(&mut out, 0.0, "validation loss", &loss);
    chart(&mut out, CHART_H, "validation ECE", &ece);
    out.push_str("</svg>\n");
    out
}
