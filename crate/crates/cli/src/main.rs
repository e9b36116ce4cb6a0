//! `loclab`: seeded experiment runs over the check registry.
//!
//! Exit status: 0 when every asserted check passes, 1 on any asserted
//! failure (or a corrupted run directory), 2 on a configuration error.

mod config;
mod registry;
mod runner;
mod summary;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{resolve, ConfigError, ExperimentConfig, ResolvedConfig};
use runner::{execute, load_manifest, write_atomic, RunManifest, MANIFEST};

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "loclab", version, about = "Stochastic localization and spectral check suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML experiment config, or a `manifest.json` to replay its resolved config.
    #[arg(long)]
    config: PathBuf,
    /// Root seed; overrides the config value.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; overrides the config value.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the checks selected by a config.
    Run(RunArgs),
    /// Print the per-check table of a finished run.
    Report {
        /// `manifest.json` or the run directory holding it.
        manifest: PathBuf,
    },
    /// List registered checks and suites.
    ListChecks,
    /// Run the cartesian product of the config's `[sweep]` axes.
    Sweep(RunArgs),
}

enum Failure {
    Config(String),
    Io(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn io(e: std::io::Error) -> Failure {
    Failure::Io(e.to_string())
}

/// Resolved config and output directory for `run`.
fn prepare(args: &RunArgs) -> Result<(ResolvedConfig, PathBuf, usize), Failure> {
    let is_manifest = args.config.extension().is_some_and(|e| e == "json");
    let (resolved, out, threads) = if is_manifest {
        let m = load_manifest(&args.config).map_err(|e| Failure::Config(format!("{}: {e}", args.config.display())))?;
        let mut resolved = m.resolved;
        if let Some(seed) = args.seed {
            resolved = reseed(resolved, seed);
        }
        (resolved, None, None)
    } else {
        let cfg = ExperimentConfig::load(&args.config)?;
        (resolve(&cfg, args.seed)?, cfg.out.map(PathBuf::from), cfg.threads)
    };
    let out = args
        .out
        .clone()
        .or(out)
        .ok_or_else(|| Failure::Config("out: no output directory (set `out` or pass --out)".into()))?;
    Ok((resolved, out, args.threads.or(threads).unwrap_or(0)))
}

fn reseed(mut r: ResolvedConfig, seed: u64) -> ResolvedConfig {
    r.seed = seed;
    for c in &mut r.checks {
        c.seed = loclab::rng::derive_seed(seed, &c.label);
    }
    r
}

fn print_run(m: &RunManifest, out: &Path) {
    for c in &m.checks {
        let status = match c.status {
            runner::Status::Pass => "PASS",
            runner::Status::Fail => "FAIL",
            runner::Status::Error => "ERROR",
        };
        let note = c.error.as_deref().map(|e| format!(" ({e})")).unwrap_or_default();
        let soft = if c.assert { "" } else { " [not asserted]" };
        println!("{status:<5} {} {} reports {:.2}s{soft}{note}", c.label, c.reports, c.wall_seconds);
    }
    println!("wrote {}", out.join(MANIFEST).display());
}

fn cmd_run(args: &RunArgs) -> Result<bool, Failure> {
    let (resolved, out, threads) = prepare(args)?;
    let m = execute(&resolved, &out, threads).map_err(io)?;
    print_run(&m, &out);
    Ok(m.passed)
}

fn cmd_report(path: &Path) -> Result<bool, Failure> {
    let file = if path.is_dir() { path.join(MANIFEST) } else { path.to_path_buf() };
    let m = load_manifest(&file).map_err(|e| Failure::Config(format!("{}: {e}", file.display())))?;
    let dir = file.parent().unwrap_or(Path::new("."));
    let s = summary::summarize(&m, dir);
    print!("{}", summary::render(&s));
    Ok(s.clean())
}

fn cmd_list() {
    for c in registry::CHECKS {
        println!("{:<22} {:<13} {}", c.name, c.module, c.anchor);
    }
    println!();
    println!("suites: {}", config::SUITES.join(", "));
    println!("families: {}", config::FAMILIES.join(", "));
}

/// One point of the sweep grid as `(axis, value)` pairs.
type Point = Vec<(&'static str, String)>;

fn sweep_points(s: &config::SweepConfig) -> Vec<Point> {
    let axes: Vec<(&'static str, Vec<String>)> = vec![
        ("family", s.family.clone()),
        ("n", s.n.iter().map(ToString::to_string).collect()),
        ("seed", s.seed.iter().map(ToString::to_string).collect()),
        ("replicas", s.replicas.iter().map(ToString::to_string).collect()),
        ("grid", s.grid.iter().map(ToString::to_string).collect()),
    ];
    let mut points: Vec<Point> = vec![Vec::new()];
    for (name, values) in axes.into_iter().filter(|a| !a.1.is_empty()) {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((name, v.clone()));
                    q
                })
            })
            .collect();
    }
    points
}

fn apply_point(base: &ExperimentConfig, point: &Point) -> ExperimentConfig {
    let mut cfg = base.clone();
    for (axis, v) in point {
        match *axis {
            "family" => cfg.measure.family = Some(v.clone()),
            "n" => cfg.measure.n = v.parse().ok(),
            "seed" => cfg.seed = v.parse().ok(),
            "replicas" => cfg.budgets.replicas = v.parse().ok(),
            "grid" => cfg.budgets.grid = v.parse().ok(),
            _ => unreachable!("unknown sweep axis"),
        }
    }
    cfg
}

fn cmd_sweep(args: &RunArgs) -> Result<bool, Failure> {
    let base = ExperimentConfig::load(&args.config)?;
    let out = args
        .out
        .clone()
        .or_else(|| base.out.clone().map(PathBuf::from))
        .ok_or_else(|| Failure::Config("out: no output directory (set `out` or pass --out)".into()))?;
    let threads = args.threads.or(base.threads).unwrap_or(0);
    let points = sweep_points(&base.sweep);
    let mut resolved = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let cfg = apply_point(&base, p);
        let r = resolve(&cfg, args.seed)
            .map_err(|e| Failure::Config(format!("sweep point {i} ({}): {e}", describe(p))))?;
        resolved.push(r);
    }
    let mut index = String::from("point\tsettings\tchecks\tfailed\tpassed\tdir\n");
    let mut all = true;
    for (i, (p, r)) in points.iter().zip(&resolved).enumerate() {
        let dir_name = format!("point_{i:03}");
        let m = execute(r, &out.join(&dir_name), threads).map_err(io)?;
        let failed = m.checks.iter().filter(|c| c.status != runner::Status::Pass).count();
        println!("{} [{}] {}", if m.passed { "PASS" } else { "FAIL" }, describe(p), dir_name);
        let _ = writeln!(index, "{i}\t{}\t{}\t{failed}\t{}\t{dir_name}", describe(p), m.checks.len(), m.passed);
        all &= m.passed;
    }
    write_atomic(&out.join("sweep.tsv"), index.as_bytes()).map_err(io)?;
    Ok(all)
}

fn describe(p: &Point) -> String {
    if p.is_empty() {
        return "base".into();
    }
    p.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(",")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Report { manifest } => cmd_report(manifest),
        Command::ListChecks => {
            cmd_list();
            Ok(true)
        }
        Command::Sweep(args) => cmd_sweep(args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAIL),
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("i/o error: {msg}");
            ExitCode::from(EXIT_FAIL)
        }
    }
}
