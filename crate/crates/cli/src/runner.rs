//! Executes a resolved configuration and writes the run directory:
//! `manifest.json`, `checks.jsonl`, `summary.tsv`, `series/*.tsv`, `atoms/*.tsv`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use loclab::report::{CheckReport, Verdict};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ResolvedCheck, ResolvedConfig};
use crate::registry::{self, Artifact, CheckOutput};

pub const MANIFEST: &str = "manifest.json";
pub const CHECKS_FILE: &str = "checks.jsonl";
pub const SUMMARY_FILE: &str = "summary.tsv";
pub const MANIFEST_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Error,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckStatus {
    pub label: String,
    pub name: String,
    pub status: Status,
    pub assert: bool,
    pub wall_seconds: f64,
    pub reports: usize,
    pub failed_reports: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub threads: usize,
    pub resolved: ResolvedConfig,
    pub checks: Vec<CheckStatus>,
    pub files: Vec<FileEntry>,
    /// No asserted check failed or errored.
    pub passed: bool,
}

/// One line of `checks.jsonl`.
#[derive(Debug, Serialize)]
struct Row<'a> {
    label: &'a str,
    assert: bool,
    #[serde(flatten)]
    report: &'a CheckReport,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

struct Outcome {
    output: Result<CheckOutput, String>,
    seconds: f64,
}

fn run_check(c: &ResolvedCheck) -> Outcome {
    let start = Instant::now();
    let output = match registry::lookup(&c.name) {
        Some(info) => (info.run)(c).map_err(|e| e.to_string()),
        None => Err(format!("unknown check {}", c.name)),
    };
    Outcome { output, seconds: start.elapsed().as_secs_f64() }
}

fn fmt(v: f64) -> String {
    format!("{v:.9e}")
}

fn tsv_field(s: &str) -> String {
    s.replace(['\t', '\n'], " ")
}

/// Runs every check on a pool of `threads` workers (0 = all cores); results
/// are reduced in configuration order.
pub fn execute(resolved: &ResolvedConfig, out: &Path, threads: usize) -> std::io::Result<RunManifest> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(std::io::Error::other)?;
    let outcomes: Vec<Outcome> = pool.install(|| resolved.checks.par_iter().map(run_check).collect());
    fs::create_dir_all(out)?;

    let mut files = Vec::new();
    let mut record = |rel: String, bytes: &[u8]| -> std::io::Result<()> {
        write_atomic(&out.join(&rel), bytes)?;
        files.push(FileEntry { path: rel, sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
        Ok(())
    };

    let mut jsonl = String::new();
    let mut summary = String::from("label\tcheck\tanchor\tstatistic\tbound\tse\ttolerance\trelation\tverdict\n");
    let mut statuses = Vec::new();
    for (c, o) in resolved.checks.iter().zip(&outcomes) {
        let status = match &o.output {
            Ok(output) => {
                for r in &output.reports {
                    let row = Row { label: &c.label, assert: c.assert, report: r };
                    jsonl.push_str(&serde_json::to_string(&row).map_err(std::io::Error::other)?);
                    jsonl.push('\n');
                    summary.push_str(&format!(
                        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                        tsv_field(&c.label),
                        r.check_name,
                        tsv_field(&r.anchor),
                        fmt(r.statistic),
                        fmt(r.bound),
                        fmt(r.se),
                        fmt(r.tolerance),
                        serde_json::to_value(r.relation).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                        verdict_name(r.verdict),
                    ));
                }
                for Artifact { kind, content } in &output.artifacts {
                    record(format!("{kind}/{}.tsv", c.label), content.as_bytes())?;
                }
                let failed = output.reports.iter().filter(|r| !r.passed()).count();
                CheckStatus {
                    label: c.label.clone(),
                    name: c.name.clone(),
                    status: if failed == 0 { Status::Pass } else { Status::Fail },
                    assert: c.assert,
                    wall_seconds: o.seconds,
                    reports: output.reports.len(),
                    failed_reports: failed,
                    error: None,
                }
            }
            Err(e) => CheckStatus {
                label: c.label.clone(),
                name: c.name.clone(),
                status: Status::Error,
                assert: c.assert,
                wall_seconds: o.seconds,
                reports: 0,
                failed_reports: 0,
                error: Some(e.clone()),
            },
        };
        statuses.push(status);
    }
    record(CHECKS_FILE.into(), jsonl.as_bytes())?;
    record(SUMMARY_FILE.into(), summary.as_bytes())?;

    let passed = statuses.iter().all(|s| !s.assert || s.status == Status::Pass);
    let manifest = RunManifest {
        schema_version: MANIFEST_SCHEMA,
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        threads: pool.current_num_threads(),
        resolved: resolved.clone(),
        checks: statuses,
        files,
        passed,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
    write_atomic(&out.join(MANIFEST), text.as_bytes())?;
    Ok(manifest)
}

pub fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
        Verdict::ReportOnly => "report_only",
    }
}

pub fn load_manifest(path: &Path) -> std::io::Result<RunManifest> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(std::io::Error::other)
}
