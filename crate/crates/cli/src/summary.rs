//! Human-readable table for a finished run, with digest verification.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::runner::{sha256_hex, RunManifest, Status, CHECKS_FILE};

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    pub check: String,
    pub anchor: String,
    pub statistic: f64,
    pub bound: f64,
    pub se: f64,
    pub verdict: String,
    pub assert: bool,
}

#[derive(Debug, Default)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    /// Files missing or whose digest differs from the manifest.
    pub corrupted: Vec<String>,
    /// `(label, message)` for checks that raised an error.
    pub errors: Vec<(String, String)>,
}

impl Summary {
    pub fn fail_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.verdict == "fail").count()
    }

    /// No asserted failure, no error and no digest mismatch.
    pub fn clean(&self) -> bool {
        self.rows.iter().all(|r| !r.assert || r.verdict != "fail") && self.errors.is_empty() && self.corrupted.is_empty()
    }
}

fn num(v: &Value, key: &str) -> f64 {
    v.get(key).and_then(Value::as_f64).unwrap_or(f64::NAN)
}

fn text(v: &Value, key: &str) -> String {
    v.get(key).and_then(Value::as_str).unwrap_or_default().to_string()
}

/// Reads the run directory holding `manifest`.
pub fn summarize(manifest: &RunManifest, dir: &Path) -> Summary {
    let mut s = Summary::default();
    for f in &manifest.files {
        match fs::read(dir.join(&f.path)) {
            Ok(bytes) if sha256_hex(&bytes) == f.sha256 => {}
            Ok(_) => s.corrupted.push(format!("{}: digest mismatch", f.path)),
            Err(_) => s.corrupted.push(format!("{}: missing", f.path)),
        }
    }
    if let Ok(body) = fs::read_to_string(dir.join(CHECKS_FILE)) {
        for line in body.lines().filter(|l| !l.trim().is_empty()) {
            let Ok(v) = serde_json::from_str::<Value>(line) else {
                s.corrupted.push(format!("{CHECKS_FILE}: unparsable line"));
                continue;
            };
            s.rows.push(SummaryRow {
                label: text(&v, "label"),
                check: text(&v, "check_name"),
                anchor: text(&v, "anchor"),
                statistic: num(&v, "statistic"),
                bound: num(&v, "bound"),
                se: num(&v, "se"),
                verdict: text(&v, "verdict"),
                assert: v.get("assert").and_then(Value::as_bool).unwrap_or(true),
            });
        }
    }
    for c in &manifest.checks {
        if c.status == Status::Error && c.assert {
            s.errors.push((c.label.clone(), c.error.clone().unwrap_or_default()));
        }
    }
    s
}

pub fn render(s: &Summary) -> String {
    let headers = ["check", "anchor", "statistic", "bound", "se", "verdict"];
    let cells: Vec<[String; 6]> = s
        .rows
        .iter()
        .map(|r| {
            let name = if r.label == r.check { r.check.clone() } else { format!("{}/{}", r.label, r.check) };
            [
                name,
                r.anchor.clone(),
                format!("{:.6e}", r.statistic),
                format!("{:.6e}", r.bound),
                format!("{:.2e}", r.se),
                r.verdict.to_uppercase(),
            ]
        })
        .collect();
    let mut width = headers.map(str::len);
    for row in &cells {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, row: &[String]| {
        let padded: Vec<String> = row.iter().zip(&width).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(&mut out, &headers.map(String::from));
    line(&mut out, &width.map(|w| "-".repeat(w)));
    for row in &cells {
        line(&mut out, row);
    }
    for (label, msg) in &s.errors {
        let _ = writeln!(out, "ERROR {label}: {msg}");
    }
    for c in &s.corrupted {
        let _ = writeln!(out, "CORRUPT {c}");
    }
    let _ = writeln!(
        out,
        "{} rows, {} fail, {} errors, {} corrupted files",
        s.rows.len(),
        s.fail_rows(),
        s.errors.len(),
        s.corrupted.len()
    );
    out
}
