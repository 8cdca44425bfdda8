//! Static SVG charts of median latency against dataset size.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use crate::report::{read_report, LatencyReport, Summary};

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 56.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Reads every `*.json` report in `dir`, skipping files that are not reports.
pub fn load_reports(dir: &Path) -> std::io::Result<Vec<LatencyReport>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    Ok(paths.iter().filter_map(|p| read_report(p).ok()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Update,
    Creation,
}

fn pick(r: &LatencyReport, m: Metric) -> Option<Summary> {
    match m {
        Metric::Update => r.update,
        Metric::Creation => r.creation,
    }
}

/// Points (rows, median, q1, q3) per `scenario/condition` series.
pub fn series(reports: &[LatencyReport], m: Metric) -> BTreeMap<String, Vec<(f64, f64, f64, f64)>> {
    let mut out: BTreeMap<String, Vec<(f64, f64, f64, f64)>> = BTreeMap::new();
    for r in reports {
        if let Some(s) = pick(r, m) {
            out.entry(format!("{}/{}", r.scenario, r.condition))
                .or_default()
                .push((r.rows as f64, s.median, s.q1, s.q3));
        }
    }
    for v in out.values_mut() {
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    out
}

fn log_span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| *v > 0.0)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let (a, b) = (lo.log10().floor(), hi.log10().ceil());
    (a, if b > a { b } else { a + 1.0 })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Log-log chart of median latency (with IQR bands) by dataset size.
pub fn render(reports: &[LatencyReport], m: Metric, title: &str) -> String {
    let data = series(reports, m);
    let (x0, x1) = log_span(data.values().flatten().map(|p| p.0));
    let (y0, y1) = log_span(data.values().flatten().flat_map(|p| [p.1, p.2.max(p.1 * 1e-3), p.3]));
    let sx = |x: f64| PAD + (x.max(1e-12).log10() - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y.max(1e-12).log10() - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    for e in (x0 as i32)..=(x1 as i32) {
        let x = sx(10f64.powi(e));
        let _ = writeln!(
            s,
            r##"<line x1="{x:.1}" y1="{}" x2="{x:.1}" y2="{}" stroke="#ddd"/><text x="{x:.1}" y="{}" text-anchor="middle">1e{e}</text>"##,
            PAD,
            H - PAD,
            H - PAD + 16.0
        );
    }
    for e in (y0 as i32)..=(y1 as i32) {
        let y = sy(10f64.powi(e));
        let _ = writeln!(
            s,
            r##"<line x1="{}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">1e{e}</text>"##,
            PAD,
            W - PAD,
            PAD - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">rows</text><text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">median ms</text>"#,
        W / 2.0,
        H - 14.0,
        H / 2.0,
        H / 2.0
    );
    for (i, (name, pts)) in data.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        if pts.len() > 1 {
            let upper: Vec<String> = pts.iter().map(|p| format!("{:.1},{:.1}", sx(p.0), sy(p.3))).collect();
            let lower: Vec<String> = pts.iter().rev().map(|p| format!("{:.1},{:.1}", sx(p.0), sy(p.2))).collect();
            let _ = writeln!(
                s,
                r#"<polygon points="{} {}" fill="{c}" fill-opacity="0.15"/>"#,
                upper.join(" "),
                lower.join(" ")
            );
            let line: Vec<String> = pts.iter().map(|p| format!("{:.1},{:.1}", sx(p.0), sy(p.1))).collect();
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#, line.join(" "));
        }
        for p in pts {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{c}"/>"#, sx(p.0), sy(p.1));
        }
        let ly = PAD + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{:.1}" width="10" height="10" fill="{c}"/><text x="{}" y="{:.1}">{}</text>"#,
            W - PAD - 150.0,
            ly - 9.0,
            W - PAD - 136.0,
            ly,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}
