//! Serialization of correlation reports: canonical JSON, CSV, SVG scatter plots.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::correlation::fractional_ranks;
use super::{CorrelationReport, Filter};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
    SvgScatter,
}

pub const CSV_HEADER: &str =
    "metric,embedding_label,filter,r_pearson,r_spearman,abs_r_pearson,abs_r_spearman,n_points";

/// Recursively orders object keys.
pub fn canonicalize(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(
                entries
                    .into_iter()
                    .map(|(k, v)| (k, canonicalize(v)))
                    .collect::<Map<_, _>>(),
            )
        }
        Value::Array(a) => Value::Array(a.into_iter().map(canonicalize).collect()),
        other => other,
    }
}

/// Pretty JSON with sorted keys.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&canonicalize(serde_json::to_value(value)?))?;
    s.push('\n');
    Ok(s)
}

pub fn report_to_json(r: &CorrelationReport) -> Result<String> {
    to_canonical_json(r)
}

pub fn report_from_json(s: &str) -> Result<CorrelationReport> {
    Ok(serde_json::from_str(s)?)
}

fn filter_name(f: Filter) -> &'static str {
    match f {
        Filter::All => "all",
        Filter::WithoutLowpass => "without_lowpass",
    }
}

pub fn report_to_csv(r: &CorrelationReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER.split(','))?;
    for row in &r.rows {
        w.write_record([
            row.metric.clone(),
            row.embedding_label.clone(),
            filter_name(row.filter).to_string(),
            row.r_pearson.to_string(),
            row.r_spearman.to_string(),
            row.abs_r_pearson.to_string(),
            row.abs_r_spearman.to_string(),
            row.n_points.to_string(),
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Format(format!("CSV buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 60.0;

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Scatter of distance against MUSHRA score for one metric, one point per
/// surviving pair, with a trend line from a least-squares fit of score on
/// distance rank. Lowpass anchors carry the `lp` class.
pub fn scatter_svg(r: &CorrelationReport, metric: &str) -> Result<String> {
    let pts: Vec<(f64, f64, bool)> = r
        .surviving(metric)
        .map(|p| (p.distance.expect("surviving"), p.mushra_score, p.is_lowpass_anchor))
        .collect();
    if pts.is_empty() {
        return Err(Error::EmptyInput(format!("no surviving pairs for metric '{metric}'")));
    }
    let (mut x_lo, mut x_hi) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    if x_hi - x_lo <= 0.0 {
        x_lo -= 0.5;
        x_hi += 0.5;
    }
    let sx = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - y / 100.0 * (H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{m} {m} V{b} H{r}" stroke="black" fill="none"/>"#,
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN
    );
    let title = xml_escape(&format!("{metric} ({})", r.embedding_label));
    let _ = writeln!(s, r#"<text x="{}" y="30" text-anchor="middle" font-family="sans-serif" font-size="16">{title}</text>"#, W / 2.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">distance [{x_lo:.4} .. {x_hi:.4}]</text>"#, W / 2.0, H - 20.0);
    let _ = writeln!(s, r#"<text x="20" y="{}" font-family="sans-serif" font-size="12" transform="rotate(-90 20 {})">MUSHRA</text>"#, H / 2.0, H / 2.0);

    if let Some(row) = r.row(metric, Filter::All) {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="48" text-anchor="middle" font-family="sans-serif" font-size="12">Rp = {:.3}, Rs = {:.3}, n = {}</text>"#,
            W / 2.0,
            row.r_pearson,
            row.r_spearman,
            row.n_points
        );
    }

    // Trend: score ≈ a + b·rank(distance), drawn through the sorted distances.
    if pts.len() >= 2 {
        let ranks = fractional_ranks(&pts.iter().map(|p| p.0).collect::<Vec<_>>());
        let n = pts.len() as f64;
        let mr = ranks.iter().sum::<f64>() / n;
        let ms = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let srr: f64 = ranks.iter().map(|r| (r - mr).powi(2)).sum();
        let srs: f64 = ranks.iter().zip(&pts).map(|(r, p)| (r - mr) * (p.1 - ms)).sum();
        let b = if srr > 0.0 { srs / srr } else { 0.0 };
        let mut order: Vec<usize> = (0..pts.len()).collect();
        order.sort_by(|&i, &j| pts[i].0.total_cmp(&pts[j].0));
        let line: Vec<String> = order
            .iter()
            .map(|&i| {
                let fit = (ms + b * (ranks[i] - mr)).clamp(0.0, 100.0);
                format!("{:.2},{:.2}", sx(pts[i].0), sy(fit))
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="trend" points="{}" stroke="steelblue" stroke-width="2" fill="none"/>"#,
            line.join(" ")
        );
    }

    for &(d, score, lp) in &pts {
        let (class, fill) = if lp { ("point lp", "orange") } else { ("point", "black") };
        let _ = writeln!(
            s,
            r#"<circle class="{class}" cx="{:.2}" cy="{:.2}" r="3" fill="{fill}"/>"#,
            sx(d),
            sy(score)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn file_safe(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf> {
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes the report into `dir` and returns the created files:
/// `report.json`, `report.csv`, or one `scatter_<metric>.svg` per metric.
pub fn emit_report(r: &CorrelationReport, format: ReportFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    match format {
        ReportFormat::Json => Ok(vec![write(dir.join("report.json"), &report_to_json(r)?)?]),
        ReportFormat::Csv => Ok(vec![write(dir.join("report.csv"), &report_to_csv(r)?)?]),
        ReportFormat::SvgScatter => r
            .metrics
            .iter()
            .map(|m| {
                let svg = scatter_svg(r, &m.label)?;
                write(dir.join(format!("scatter_{}.svg", file_safe(&m.label))), &svg)
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_json_sorts_keys() {
        let v = serde_json::json!({"b": 1, "a": {"d": 2, "c": [ {"z": 0, "y": 1} ]}});
        let s = to_canonical_json(&v).unwrap();
        let a = s.find("\"a\"").unwrap();
        let b = s.find("\"b\"").unwrap();
        assert!(a < b);
        assert!(s.find("\"y\"").unwrap() < s.find("\"z\"").unwrap());
    }

    #[test]
    fn escapes_labels() {
        assert_eq!(xml_escape("a<b&\"c\""), "a&lt;b&amp;&quot;c&quot;");
        assert_eq!(file_safe("mmd_sigma1e4/x"), "mmd_sigma1e4_x");
    }
}
