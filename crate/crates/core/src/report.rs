//! Experiment reports: long-format rows, verdicts, and their CSV, JSON and
//! SVG renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One measured quantity. `j` is the family index (0 when not indexed by
/// `j`) and `param` the secondary coordinate (an exponent, a pair index, a
/// threshold multiple).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub config_hash: String,
    pub series: String,
    pub j: u64,
    pub param: f64,
    pub value: f64,
    pub uncertainty: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub rule: String,
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(rule: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            rule: rule.into(),
            pass,
            detail: detail.into(),
        }
    }
}

/// Hex SHA-256 prefix of a serializable value's JSON form.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    let digest = Sha256::digest(&bytes);
    digest.iter().take(8).fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Collects rows under one config hash.
#[derive(Clone, Debug, Default)]
pub struct RowSink {
    hash: String,
    rows: Vec<Row>,
}

impl RowSink {
    pub fn new(hash: &str) -> Self {
        Self {
            hash: hash.to_string(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, series: &str, j: u64, param: f64, value: f64, uncertainty: f64) {
        self.rows.push(Row {
            config_hash: self.hash.clone(),
            series: series.to_string(),
            j,
            param,
            value,
            uncertainty,
        });
    }

    pub fn extend(&mut self, rows: Vec<Row>) {
        self.rows.extend(rows);
    }

    pub fn into_rows(self) -> Vec<Row> {
        self.rows
    }
}

/// Rows of one series, in insertion order.
pub fn series<'a>(rows: &'a [Row], name: &str) -> Vec<&'a Row> {
    rows.iter().filter(|r| r.series == name).collect()
}

/// Values of one series keyed by `param`, each sorted by `j`.
pub fn by_param(rows: &[Row], name: &str) -> Vec<(f64, Vec<(u64, f64)>)> {
    let mut groups: Vec<(f64, Vec<(u64, f64)>)> = Vec::new();
    for r in series(rows, name) {
        match groups.iter_mut().find(|(p, _)| *p == r.param) {
            Some((_, v)) => v.push((r.j, r.value)),
            None => groups.push((r.param, vec![(r.j, r.value)])),
        }
    }
    for (_, v) in &mut groups {
        v.sort_by_key(|e| e.0);
    }
    groups
}

/// Which row coordinate a chart puts on its horizontal axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    J,
    Param,
}

#[derive(Clone, Copy, Debug)]
pub struct ChartSpec {
    pub series: &'static str,
    pub x: Axis,
    pub log_x: bool,
    pub log_y: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub config_hash: String,
    /// Full configuration with every default materialized.
    pub config: serde_json::Value,
    pub rows: Vec<Row>,
    pub verdicts: Vec<Verdict>,
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn series(&self, name: &str) -> Vec<&Row> {
        series(&self.rows, name)
    }

    pub fn write_rows_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn rows_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_rows_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    /// Line charts of the given series. `stamp` is embedded only when set.
    pub fn charts(&self, specs: &[ChartSpec], stamp: Option<&str>) -> Vec<(String, String)> {
        specs
            .iter()
            .filter_map(|spec| {
                let lines = chart_lines(&self.rows, spec);
                if lines.iter().all(|(_, pts)| pts.is_empty()) {
                    return None;
                }
                let title = format!("{} / {}", self.experiment, spec.series);
                let svg = render_svg(&title, &self.config_hash, spec, &lines, stamp);
                Some((format!("{}.svg", spec.series), svg))
            })
            .collect()
    }

    /// Writes `report.json` (or `json_name`), `rows.csv` and the charts into
    /// `dir`, returning the paths written.
    pub fn write_all(
        &self,
        dir: &Path,
        json_name: &str,
        specs: &[ChartSpec],
        formats: &[String],
        stamp: Option<&str>,
    ) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let want = |f: &str| formats.iter().any(|x| x == f);
        let mut written = Vec::new();
        if want("json") {
            let p = dir.join(json_name);
            fs::write(&p, self.to_json()? + "\n")?;
            written.push(p);
        }
        if want("csv") {
            let p = dir.join("rows.csv");
            fs::write(&p, self.rows_csv()?)?;
            written.push(p);
        }
        if want("svg") {
            for (name, svg) in self.charts(specs, stamp) {
                let p = dir.join(name);
                fs::write(&p, svg)?;
                written.push(p);
            }
        }
        Ok(written)
    }
}

type Line = (String, Vec<(f64, f64)>);

fn chart_lines(rows: &[Row], spec: &ChartSpec) -> Vec<Line> {
    let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in series(rows, spec.series) {
        let (label, x) = match spec.x {
            Axis::J => (format!("param={}", r.param), r.j as f64),
            Axis::Param => (format!("j={}", r.j), r.param),
        };
        let ok = |v: f64, log: bool| v.is_finite() && (!log || v > 0.0);
        if ok(x, spec.log_x) && ok(r.value, spec.log_y) {
            groups.entry(label).or_default().push((x, r.value));
        }
    }
    groups
        .into_iter()
        .map(|(k, mut v)| {
            v.sort_by(|a, b| a.0.total_cmp(&b.0));
            (k, v)
        })
        .collect()
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn render_svg(title: &str, hash: &str, spec: &ChartSpec, lines: &[Line], stamp: Option<&str>) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (80.0, 160.0, 40.0, 50.0);
    let tx = |v: f64| if spec.log_x { v.log10() } else { v };
    let ty = |v: f64| if spec.log_y { v.log10() } else { v };
    let pts = lines.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(tx(x));
        x1 = x1.max(tx(x));
        y0 = y0.min(ty(y));
        y1 = y1.max(ty(y));
    }
    if x1 - x0 <= 0.0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 <= 0.0 {
        let pad = y0.abs().max(1e-12) * 0.05;
        y0 -= pad;
        y1 += pad;
    }
    let px = |x: f64| left + (tx(x) - x0) / (x1 - x0) * (w - left - right);
    let py = |y: f64| h - bottom - (ty(y) - y0) / (y1 - y0) * (h - top - bottom);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, "<desc>config {hash}</desc>");
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{left}" y="22" font-size="14">{}</text>"#, xml_escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - left - right,
        h - top - bottom
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let gx = left + f * (w - left - right);
        let gy = h - bottom - f * (h - top - bottom);
        let lx = if spec.log_x { 10f64.powf(xv) } else { xv };
        let ly = if spec.log_y { 10f64.powf(yv) } else { yv };
        let _ = writeln!(s, r#"<text x="{gx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, h - bottom + 16.0, tick(lx));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, left - 6.0, gy + 4.0, tick(ly));
    }
    let xlabel = match spec.x {
        Axis::J => "j",
        Axis::Param => "param",
    };
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xlabel}{}</text>"#,
        (left + w - right) / 2.0,
        h - 12.0,
        if spec.log_x { " (log)" } else { "" }
    );
    for (i, (label, p)) in lines.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
        for &(x, y) in p {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, px(x), py(y));
        }
        let ly = top + 14.0 * (i as f64 + 1.0);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{ly:.1}" fill="{color}">{}</text>"#,
            w - right + 10.0,
            xml_escape(label)
        );
    }
    if let Some(st) = stamp {
        let _ = writeln!(s, r#"<text x="{left}" y="{:.1}" font-size="9">{}</text>"#, h - 2.0, xml_escape(st));
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> ExperimentReport {
        let mut sink = RowSink::new("abc");
        sink.push("err", 8, 0.0, 0.5, 0.0);
        sink.push("err", 16, 0.0, 0.25, 0.01);
        sink.push("err", 16, 1.0, 0.3, 0.0);
        ExperimentReport {
            experiment: "converge".into(),
            config_hash: "abc".into(),
            config: serde_json::json!({"n": 8}),
            rows: sink.into_rows(),
            verdicts: vec![Verdict::new("ok", true, "")],
            notes: vec![],
            wall_clock_seconds: None,
        }
    }

    #[test]
    fn csv_has_header_and_hash() {
        let csv = report().rows_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "config_hash,series,j,param,value,uncertainty");
        assert!(lines.all(|l| l.starts_with("abc,")));
    }

    #[test]
    fn json_round_trips() {
        let r = report();
        let back: ExperimentReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        assert!(!r.to_json().unwrap().contains("wall_clock"));
    }

    #[test]
    fn grouping_by_param() {
        let r = report();
        let g = by_param(&r.rows, "err");
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].1, vec![(8, 0.5), (16, 0.25)]);
    }

    #[test]
    fn charts_are_deterministic_and_stamped_only_on_request() {
        let r = report();
        let spec = [ChartSpec { series: "err", x: Axis::J, log_x: true, log_y: true }];
        let a = r.charts(&spec, None);
        let b = r.charts(&spec, None);
        assert_eq!(a, b);
        assert_eq!(a.len(), 1);
        assert!(a[0].1.contains("config abc"));
        let stamped = r.charts(&spec, Some("2026-01-01"));
        assert!(stamped[0].1.contains("2026-01-01"));
        assert!(!a[0].1.contains("2026-01-01"));
    }

    #[test]
    fn hash_is_stable() {
        let a = config_hash(&serde_json::json!({"a": 1}));
        assert_eq!(a, config_hash(&serde_json::json!({"a": 1})));
        assert_ne!(a, config_hash(&serde_json::json!({"a": 2})));
        assert_eq!(a.len(), 16);
    }
}
