//! CSV and JSON rendering of [`MetricsReport`].
//!
//! Floats are written with Rust's shortest round-trip formatting, so parsing
//! an emitted value gives back the same `f64`.

use std::fmt::Write as _;
use std::path::Path;

use super::{HarnessError, MetricsReport, ReportFormat};

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Header, one row per trial, then the aggregates as `# key=value` lines.
pub fn render_csv(report: &MetricsReport) -> String {
    let kc = report.aggregates.resources;
    let mut out = String::from("seed,revenue,ratio,feasible");
    for k in 0..kc {
        write!(out, ",lower_violated_{k}").unwrap();
    }
    for k in 0..kc {
        write!(out, ",upper_violated_{k}").unwrap();
    }
    out.push_str(",failure\n");
    for t in &report.trials {
        write!(out, "{},{},{},{}", t.seed, t.revenue, opt(t.ratio), t.feasible).unwrap();
        for v in t.lower_violated.iter().chain(&t.upper_violated) {
            write!(out, ",{v}").unwrap();
        }
        writeln!(out, ",{}", csv_field(t.failure.as_deref().unwrap_or(""))).unwrap();
    }
    let agg = serde_json::to_value(&report.aggregates).expect("aggregates serialize");
    if let serde_json::Value::Object(map) = agg {
        for (key, value) in map {
            let shown = match value {
                serde_json::Value::Null => String::new(),
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            };
            writeln!(out, "# {key}={shown}").unwrap();
        }
    }
    out
}

pub fn render_json(report: &MetricsReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn read_json_report(text: &str) -> Result<MetricsReport, HarnessError> {
    serde_json::from_str(text).map_err(|e| HarnessError::Report(e.to_string()))
}

pub fn emit_report(
    report: &MetricsReport,
    path: &Path,
    format: ReportFormat,
) -> Result<(), HarnessError> {
    let body = match format {
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Json => render_json(report),
    };
    std::fs::write(path, body).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}
