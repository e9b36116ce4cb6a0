use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::Value;
use tempfile::TempDir;

fn loclab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loclab")).args(args).output().expect("spawn loclab")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn table_rows(report: &str) -> Vec<&str> {
    report.lines().skip(2).filter(|l| l.ends_with("PASS") || l.ends_with("FAIL") || l.ends_with("REPORT_ONLY")).collect()
}

const SMOKE: &str = "seed = 11\nsuite = \"smoke\"\n[measure]\nfamily = \"gaussian\"\nn = 4\n";

#[test]
fn smoke_suite_passes_quickly_and_reports_cleanly() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "smoke.toml", SMOKE);
    let out = tmp.path().join("run");
    let start = Instant::now();
    let run = loclab(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(start.elapsed().as_secs_f64() < 60.0, "smoke run took {:?}", start.elapsed());
    assert_eq!(run.status.code(), Some(0), "{}{}", stdout(&run), stderr(&run));

    let m = manifest(&out);
    assert_eq!(m["passed"], Value::Bool(true));
    for f in m["files"].as_array().unwrap() {
        assert_eq!(f["sha256"].as_str().unwrap().len(), 64);
        assert!(out.join(f["path"].as_str().unwrap()).exists());
    }
    assert!(out.join("series/gaussian_oracle.tsv").exists());
    assert!(out.join("atoms/spectral_engine.tsv").exists());
    let series = fs::read_to_string(out.join("series/gaussian_oracle.tsv")).unwrap();
    assert!(series.starts_with("# schema_version=1"));

    let report = loclab(&["report", out.join("manifest.json").to_str().unwrap()]);
    assert_eq!(report.status.code(), Some(0), "{}", stdout(&report));
    let text = stdout(&report);
    let rows = table_rows(&text);
    assert!(rows.len() >= 10, "{text}");
    assert!(rows.iter().all(|r| !r.ends_with("FAIL")), "{text}");
}

#[test]
fn replaying_a_manifest_reproduces_statistics_bit_for_bit() {
    let tmp = TempDir::new().unwrap();
    let body = "seed = 3\n[measure]\nfamily = \"exponential\"\nn = 2\n\
                [budgets]\nreplicas = 24\nsteps = 24\n\
                [[checks]]\nname = \"drift_identity\"\n\
                [[checks]]\nname = \"key_chen\"\nt = [1.0]\nfamily = \"simplex\"\nsamples = 4000\n\
                [[checks]]\nname = \"deviation\"\nreplicas = 2000\nsteps = 50\n";
    let cfg = write_config(tmp.path(), "c.toml", body);
    let first = tmp.path().join("a");
    let second = tmp.path().join("b");
    let run = loclab(&["run", "--config", &cfg, "--out", first.to_str().unwrap(), "--threads", "4"]);
    assert!(run.status.success(), "{}{}", stdout(&run), stderr(&run));
    let replay = loclab(&[
        "run",
        "--config",
        first.join("manifest.json").to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
        "--threads",
        "1",
    ]);
    assert!(replay.status.success(), "{}", stderr(&replay));
    for f in ["checks.jsonl", "summary.tsv", "series/drift_identity.tsv"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f} differs");
    }
    assert_eq!(manifest(&first)["resolved"], manifest(&second)["resolved"]);
}

#[test]
fn equal_growth_times_record_a_trivial_pass() {
    let tmp = TempDir::new().unwrap();
    let body = "[budgets]\nreplicas = 8\nsteps = 16\n[[checks]]\nname = \"chen_growth\"\nt1 = 1.0\nt2 = 1.0\n";
    let cfg = write_config(tmp.path(), "g.toml", body);
    let out = tmp.path().join("run");
    let run = loclab(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
    let line = fs::read_to_string(out.join("checks.jsonl")).unwrap();
    let row: Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    assert_eq!(row["verdict"], "pass");
    assert_eq!(row["details"]["trivial"], Value::Bool(true));
    assert_eq!(row["statistic"], row["bound"]);
}

#[test]
fn invalid_family_is_a_configuration_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", "[measure]\nfamily = \"cauchy\"\n");
    let run = loclab(&["run", "--config", &cfg, "--out", tmp.path().join("x").to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(2));
    assert!(stderr(&run).contains("measure.family"), "{}", stderr(&run));
    assert!(!tmp.path().join("x").exists());

    let cfg = write_config(tmp.path(), "bad2.toml", "[[checks]]\nname = \"cefm\"\ngird = 3\n");
    let run = loclab(&["run", "--config", &cfg, "--out", tmp.path().join("y").to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(2));
    assert!(stderr(&run).contains("gird"), "{}", stderr(&run));
}

#[test]
fn empty_check_list_gives_an_empty_table() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "empty.toml", "seed = 1\n");
    let out = tmp.path().join("run");
    assert_eq!(loclab(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]).status.code(), Some(0));
    let report = loclab(&["report", out.to_str().unwrap()]);
    assert_eq!(report.status.code(), Some(0));
    let text = stdout(&report);
    assert!(table_rows(&text).is_empty(), "{text}");
    assert!(text.contains("0 rows, 0 fail"), "{text}");
}

#[test]
fn erroring_check_is_recorded_and_the_rest_still_run() {
    let tmp = TempDir::new().unwrap();
    let body = "[measure]\nfamily = \"ball\"\nn = 2\n[[checks]]\nname = \"h_minus1\"\n\
                [[checks]]\nname = \"projection_transfer\"\nsamples = 200\n";
    let cfg = write_config(tmp.path(), "partial.toml", body);
    let out = tmp.path().join("run");
    let run = loclab(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(1));
    let m = manifest(&out);
    let checks = m["checks"].as_array().unwrap();
    assert_eq!(checks[0]["status"], "error");
    assert!(checks[0]["error"].as_str().unwrap().len() > 0);
    assert_eq!(checks[1]["status"], "pass");
    let report = loclab(&["report", out.to_str().unwrap()]);
    assert_eq!(report.status.code(), Some(1));
    assert!(stdout(&report).contains("ERROR h_minus1"));
}

#[test]
fn injected_failure_fixture_gives_exactly_one_fail_row() {
    let tmp = TempDir::new().unwrap();
    let body = "[[checks]]\nname = \"projection_transfer\"\nsamples = 100\n\
                [[checks]]\nname = \"cefm\"\ngrid = 256\n";
    let cfg = write_config(tmp.path(), "f.toml", body);
    let out = tmp.path().join("run");
    assert!(loclab(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());

    // Flip one verdict and re-seal the digests so only the verdict differs.
    let checks_path = out.join("checks.jsonl");
    let text = fs::read_to_string(&checks_path).unwrap();
    let mut lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    lines[0]["verdict"] = Value::String("fail".into());
    let body: String = lines.iter().map(|v| format!("{v}\n")).collect();
    fs::write(&checks_path, &body).unwrap();
    let mut m = manifest(&out);
    for f in m["files"].as_array_mut().unwrap() {
        if f["path"] == "checks.jsonl" {
            use sha2::Digest;
            f["sha256"] = Value::String(hex::encode(sha2::Sha256::digest(body.as_bytes())));
        }
    }
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&m).unwrap()).unwrap();

    let report = loclab(&["report", out.to_str().unwrap()]);
    assert_eq!(report.status.code(), Some(1));
    let text = stdout(&report);
    assert_eq!(table_rows(&text).iter().filter(|r| r.ends_with("FAIL")).count(), 1, "{text}");
}

#[test]
fn tampered_output_is_flagged_by_digest() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "t.toml", "[[checks]]\nname = \"projection_transfer\"\nsamples = 100\n");
    let out = tmp.path().join("run");
    assert!(loclab(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    fs::write(out.join("summary.tsv"), "tampered\n").unwrap();
    let report = loclab(&["report", out.to_str().unwrap()]);
    assert_eq!(report.status.code(), Some(1));
    assert!(stdout(&report).contains("summary.tsv: digest mismatch"));
    fs::remove_file(out.join("summary.tsv")).unwrap();
    assert!(stdout(&loclab(&["report", out.to_str().unwrap()])).contains("summary.tsv: missing"));
}

#[test]
fn sweep_runs_the_cartesian_product() {
    let tmp = TempDir::new().unwrap();
    let body = "[[checks]]\nname = \"cheeger_buser\"\ngrid = 256\n\
                [sweep]\nfamily = [\"gaussian\", \"uniform\"]\nn = [1, 2]\n";
    let cfg = write_config(tmp.path(), "s.toml", body);
    let out = tmp.path().join("sweep");
    let run = loclab(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "9"]);
    assert_eq!(run.status.code(), Some(0), "{}{}", stdout(&run), stderr(&run));
    let index = fs::read_to_string(out.join("sweep.tsv")).unwrap();
    assert_eq!(index.lines().count(), 5, "{index}");
    assert!(index.contains("family=uniform,n=2"));
    for i in 0..4 {
        let m = manifest(&out.join(format!("point_{i:03}")));
        assert_eq!(m["resolved"]["seed"], 9);
    }
}

#[test]
fn list_checks_names_every_check() {
    let o = loclab(&["list-checks"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for name in ["gaussian_oracle", "bridge", "key_chen", "chen_growth", "spectral_mass", "cefm", "kim_milman"] {
        assert!(text.contains(name), "{name} missing");
    }
    assert!(text.contains("suites: smoke, full"));
}
