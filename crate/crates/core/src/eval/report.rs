//! Comparison tables and score-vs-epoch charts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::evaluate::ScoreReport;
use crate::agent::write_atomic;
use crate::motion::Behaviour;
use crate::{Error, Result};

pub const REPORT_HEADER: &str = "method,behaviour_set,split,score,smoothness,n_clips";

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub behaviour_set: String,
    pub split: String,
    pub score: f64,
    pub smoothness: f64,
    pub n_clips: usize,
}

/// Rows for each behaviour present in `report` plus a combined row.
pub fn report_rows(method: &str, split: &str, report: &ScoreReport) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for b in [Behaviour::Point, Behaviour::Wave] {
        let part = report.of(b);
        if !part.clips.is_empty() {
            rows.push(ReportRow {
                method: method.into(),
                behaviour_set: b.name().into(),
                split: split.into(),
                score: part.mean_score(),
                smoothness: part.mean_smoothness(),
                n_clips: part.clips.len(),
            });
        }
    }
    if rows.len() > 1 {
        rows.push(ReportRow {
            method: method.into(),
            behaviour_set: "both".into(),
            split: split.into(),
            score: report.mean_score(),
            smoothness: report.mean_smoothness(),
            n_clips: report.clips.len(),
        });
    }
    rows
}

pub fn rows_to_csv(rows: &[ReportRow]) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.method, r.behaviour_set, r.split, r.score, r.smoothness, r.n_clips
        );
    }
    out
}

pub fn rows_from_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, h)| h.trim()) != Some(REPORT_HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header '{REPORT_HEADER}'"),
        });
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let bad = |m: String| Error::Parse { line: i + 1, message: m };
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 6 {
                return Err(bad(format!("expected 6 fields, found {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("'{s}': {e}")));
            Ok(ReportRow {
                method: f[0].into(),
                behaviour_set: f[1].into(),
                split: f[2].into(),
                score: num(f[3])?,
                smoothness: num(f[4])?,
                n_clips: f[5].parse().map_err(|e| bad(format!("'{}': {e}", f[5])))?,
            })
        })
        .collect()
}

/// One line per method on shared epoch/score axes.
pub fn score_chart_svg(curves: &[(String, Vec<(usize, f64)>)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const M: f64 = 50.0;
    const COLOURS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

    let points = curves.iter().flat_map(|(_, c)| c.iter());
    let max_epoch = points.clone().map(|p| p.0).max().unwrap_or(1).max(1) as f64;
    let lo = points.clone().map(|p| p.1.max(0.0)).fold(100.0, f64::min).min(90.0).floor();
    let (y_lo, y_hi) = (lo, 100.0);
    let x = |e: f64| M + (W - 2.0 * M) * e / max_epoch;
    let y = |s: f64| H - M - (H - 2.0 * M) * (s.clamp(y_lo, y_hi) - y_lo) / (y_hi - y_lo);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<line x1="{M}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{M}" y1="{M}" x2="{M}" y2="{b}" stroke="black"/>"#,
        b = H - M,
        r = W - M
    );
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">epoch</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" font-size="14" transform="rotate(-90 16 {})">score</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (label, value) in [(y_lo, y_lo), (y_hi, y_hi)] {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end" font-size="11">{label}</text>"#,
            M - 4.0,
            y(value) + 4.0
        );
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle" font-size="11">{max_epoch}</text>"#, x(max_epoch), H - M + 14.0);
    for (i, (name, curve)) in curves.iter().enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        let pts: Vec<String> = curve.iter().map(|(e, s)| format!("{:.2},{:.2}", x(*e as f64), y(*s))).collect();
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{colour}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="12" fill="{colour}">{}</text>"#,
            W - M - 150.0,
            M + 16.0 * (i as f64 + 1.0),
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `report.csv` and `scores.svg` into `dir`, returning both paths.
pub fn emit_report(rows: &[ReportRow], curves: &[(String, Vec<(usize, f64)>)], dir: &Path) -> Result<(PathBuf, PathBuf)> {
    if rows.is_empty() {
        return Err(Error::Contract("report needs at least one row".into()));
    }
    let csv = dir.join("report.csv");
    let svg = dir.join("scores.svg");
    write_atomic(&csv, rows_to_csv(rows).as_bytes())?;
    write_atomic(&svg, score_chart_svg(curves).as_bytes())?;
    Ok((csv, svg))
}
