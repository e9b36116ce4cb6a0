//! Named checks, their default parameters and runners.

use std::f64::consts::PI;

use loclab::checks::{
    brenier_contraction_1d, brenier_martingale_representation, chen_growth_check, chen_growth_pair_check,
    cheeger_buser_check, kappa_comparison_check, key_chen_check, key_chen_one_dim_report, kim_milman_ks_check,
    martingale_deviation_check, softmax_deviation_report, DeviationMartingale,
};
use loclab::heat::Phi;
use loclab::localization::{
    a_growth_diagnostic, drift_consistency, gaussian_oracle, martingale_diagnostic, opnorm_tail_report,
    series_tsv, simulate_ensemble, PathConfig, PathEnsemble, TimeGrid, DEFAULT_SUBSTEPS, DEFAULT_T_MIN,
};
use loclab::measure::{Component1D, Density1D, Measure, MeasureSpec};
use loclab::report::CheckReport;
use loclab::rng::derive_seed;
use loclab::spectral::{
    build_model, cefm_check, f_lambda_bound_check, projection_transfer_check, sigma_vs_poincare_check,
    spectral_mass_sweep, variance_h1_check, GridOptions, ProductSpectra, SpectralModel,
};
use loclab::stats::Budget;
use loclab::tilted::{tilt, TestFn, TiltOptions};
use loclab::{Error, Result};

use crate::config::{CheckEntry, ResolvedCheck};

/// Plot-ready text emitted by a check.
#[derive(Debug, Clone)]
pub struct Artifact {
    /// Subdirectory of the run output (`series` or `atoms`).
    pub kind: &'static str,
    pub content: String,
}

#[derive(Debug, Default)]
pub struct CheckOutput {
    pub reports: Vec<CheckReport>,
    pub artifacts: Vec<Artifact>,
}

pub struct CheckInfo {
    pub name: &'static str,
    pub module: &'static str,
    pub anchor: &'static str,
    pub default_t: &'static [f64],
    pub default_t1: Option<f64>,
    pub default_t2: Option<f64>,
    pub run: fn(&ResolvedCheck) -> Result<CheckOutput>,
}

const TS: &[f64] = &[0.25, 0.5, 1.0, 2.0, 4.0];

const fn info(
    name: &'static str,
    module: &'static str,
    anchor: &'static str,
    run: fn(&ResolvedCheck) -> Result<CheckOutput>,
) -> CheckInfo {
    CheckInfo { name, module, anchor, default_t: TS, default_t1: None, default_t2: None, run }
}

pub const CHECKS: &[CheckInfo] = &[
    info("gaussian_oracle", "localization", "E|a_t|^2 = n t/(1+t), A_t = Id/(1+t)", gaussian_oracle_run),
    info("bridge", "localization", "E M_t^2 = ||Q_{1/t} phi||^2", bridge_run),
    info("a_growth", "localization", "d/dt E|a_t|^2 = E||A_t||_2^2", a_growth_run),
    info("drift_identity", "localization", "d/dt E Tr A^2 = E[sum|H|^2 - 2 Tr A^3]", drift_run),
    info("chen_growth", "inequality", "E||A_t2||_2^2 <= (t2/t1)^3 E||A_t1||_2^2", growth_run),
    info("key_chen", "inequality", "E<X,Y>^3 <= (3/t) Tr A^2", key_chen_run),
    info("kappa_comparison", "inequality", "kappa of X/sqrt(s) + Gaussian vs kappa of X", kappa_run),
    info("spectral_engine", "spectral", "weighted Laplacian spectrum and grid convergence", spectral_engine_run),
    info("spectral_mass", "spectral", "spectral mass below lambda vs ||Q_s f||", spectral_mass_run),
    info("projection_transfer", "spectral", "<Af,f> >= beta/4 - eps", projection_run),
    info("h_minus1", "spectral", "Var|x|^2 vs H^-1 norm, sigma^2 <= 4 C_P, F(lambda) integral", h_minus1_run),
    info("cheeger_buser", "inequality", "psi^2 / C_P in [1/4, 9]", cheeger_run),
    info("brenier", "inequality", "Brenier map contraction and martingale representation", brenier_run),
    CheckInfo {
        default_t1: Some(0.5),
        default_t2: Some(4.0),
        ..info("kim_milman", "localization", "Kim-Milman flow pushes mu_{t1} onto heat-flowed law", kim_milman_run)
    },
    info("deviation", "inequality", "P(M >= u) <= exp(-u^2 / 2 sigma^2)", deviation_run),
    info("cefm", "inequality", "Var f <= (1/2) int |f'|^2 when E f' = 0", cefm_run),
    info("localization_reports", "localization", "operator-norm tails and soft-max deviation", reports_run),
];

pub fn lookup(name: &str) -> Option<&'static CheckInfo> {
    CHECKS.iter().find(|c| c.name == name)
}

fn entry(name: &str, f: impl FnOnce(&mut CheckEntry)) -> CheckEntry {
    let mut e = CheckEntry::named(name);
    f(&mut e);
    e
}

/// Check lists behind `suite = "..."`.
pub fn suite(name: &str) -> Option<Vec<CheckEntry>> {
    match name {
        "smoke" => Some(vec![
            entry("gaussian_oracle", |e| {
                e.family = Some("gaussian".into());
                e.replicas = Some(256);
                e.steps = Some(32);
            }),
            entry("bridge", |e| {
                e.replicas = Some(256);
                e.steps = Some(32);
                e.samples = Some(2000);
            }),
            entry("drift_identity", |e| {
                e.replicas = Some(64);
                e.steps = Some(32);
            }),
            entry("chen_growth", |e| {
                e.replicas = Some(64);
                e.steps = Some(32);
            }),
            entry("key_chen", |e| {
                e.t = Some(vec![0.5, 1.0, 2.0]);
                e.samples = Some(10_000);
            }),
            entry("spectral_engine", |e| e.grid = Some(1024)),
            entry("spectral_mass", |e| {
                e.grid = Some(512);
                e.replicas = Some(20);
            }),
            entry("projection_transfer", |e| e.samples = Some(1000)),
            entry("h_minus1", |e| e.grid = Some(1024)),
            entry("cheeger_buser", |e| e.grid = Some(1024)),
            entry("brenier", |e| {
                e.replicas = Some(1000);
                e.steps = Some(128);
            }),
            entry("kim_milman", |e| e.replicas = Some(400)),
            entry("deviation", |e| {
                e.replicas = Some(4000);
                e.steps = Some(100);
            }),
            entry("cefm", |e| e.grid = Some(1024)),
        ]),
        // Checks with a family hypothesis are pinned to a family satisfying it.
        "full" => Some(
            CHECKS
                .iter()
                .map(|c| {
                    let mut e = CheckEntry::named(c.name);
                    e.family = match c.name {
                        "gaussian_oracle" => Some("gaussian".into()),
                        "brenier" | "cefm" => Some("strong_quartic".into()),
                        _ => None,
                    };
                    e
                })
                .collect(),
        ),
        _ => None,
    }
}

fn measure(c: &ResolvedCheck) -> Result<Measure> {
    Measure::new(&c.measure)
}

fn ensemble(c: &ResolvedCheck) -> Result<PathEnsemble> {
    let base = measure(c)?;
    let grid = TimeGrid::geometric(DEFAULT_T_MIN, c.horizon, c.steps, DEFAULT_SUBSTEPS)?;
    simulate_ensemble(&base, &grid, &PathConfig::default(), c.replicas, c.seed)
}

fn component(c: &ResolvedCheck) -> Result<Component1D> {
    c.component().ok_or_else(|| {
        Error::InvalidArgument(format!(
            "{} needs an i.i.d. product or standard Gaussian measure, got family {}",
            c.name, c.family
        ))
    })
}

fn model(c: &ResolvedCheck) -> Result<SpectralModel> {
    build_model(&component(c)?, c.grid)
}

fn single(report: CheckReport) -> Result<CheckOutput> {
    Ok(CheckOutput { reports: vec![report], artifacts: Vec::new() })
}

fn series(ens: &PathEnsemble) -> Vec<Artifact> {
    vec![Artifact { kind: "series", content: series_tsv(ens) }]
}

fn gaussian_oracle_run(c: &ResolvedCheck) -> Result<CheckOutput> {
    if c.measure != MeasureSpec::standard_gaussian(c.measure.dimension) {
        return Err(Error::InvalidArgument(format!("gaussian_oracle needs the standard Gaussian, got {}", c.family)));
    }
    let ens = ensemble(c)?;
    Ok(CheckOutput { reports: vec![gaussian_oracle(&ens)], artifacts: series(&ens) })
}

fn bridge_run(c: &ResolvedCheck) -> Result<CheckOutput> {
    let ens = ensemble(c)?;
    let base = measure(c)?;
    let last = ens.grid.recorded.len() - 1;
    let indices: Vec<usize> = [1, 2, 3, 4].iter().map(|q| q * last / 4).collect();
    let budget = Budget::new(c.samples, derive_seed(c.seed, "bridge-q"));
    let opts = TiltOptions::default();
    let mut reports = Vec::new();
    for (label, phi) in [("x_0", TestFn::Coordinate(0)), ("x_0^2 - 1", TestFn::hermite2(0))] {
        let r = martingale_diagnostic(&base, &ens, &Phi::Scalar(phi), &indices, &budget, &opts)?;
        reports.push(r.detail("phi", label));
    }
    Ok(CheckOutput { reports, artifacts: series(&ens) })
}

fn a_growth_run(c: &ResolvedCheck) -> Result<CheckOutput> {
    let ens = ensemble(c)?;
    Ok(CheckOutput { reports: vec![a_growth_diagnostic(&ens, None, 1.0)?], artifacts: series(&ens) })
}

fn drift_run(c: &ResolvedCheck) -> Result<CheckOutput> {
    let ens = ensemble(c)?;
    Ok(CheckOutput { reports: vec![drift_consistency(&ens)?], artifacts: series(&ens) })
}

fn growth_run(c: &ResolvedCheck) -> Result<CheckOutput> {
    let ens = ensemble(c)?;
    let report = match (c.t1, c.t2) {
        (Some(t1), Some(t2)) => chen_growth_pair_check(&ens, t1, t2)?,
        _ => chen_growth_check(&ens)?,
    };
    Ok(CheckOutput { reports: vec![report], artifacts: series(&ens) })
}

/// Deterministic non-zero tilt direction.
pub fn theta_for(n: usize) -> Vec<f64> {
    (0..n).map(|i| if i % 2 == 0 { 0.6 } else { -0.3 }).collect()
}

fn key_chen_run(c: &ResolvedCheck) -> Result<CheckOutput> {
    let base = measure(c)?;
    let opts = TiltOptions::with_budget(Budget::new(2 * c.samples, c.seed));
    let mut reports = Vec::new();
    for &t in &c.t {
        let tm = tilt(&base, t, theta_for(base.dimension()))?;
        reports.push(key_chen_check(&tm, c.samples, &opts)?);
        if base.dimension() == 1 {
            reports.push(key_chen_one_dim_report(&tm, &opts)?);
        }
    }
    Ok(CheckOutput { reports, artifacts: Vec::new() })
}

fn kappa_run(c: &ResolvedCheck) -> Result<CheckOutput> {
    single(kappa_comparison_check(&measure(c)?, None, &Budget::new(c.samples, c.seed))?)
}

fn spectral_engine_run(c: &ResolvedCheck) -> Result<CheckOutput> {
    let comp = component(c)?;
    let m = build_model(&comp, c.grid)?;
    let fine = build_model(&comp, 2 * c.grid)?;
    let mut reports = Vec::new();
    let values: Vec<f64> = (0..=5).map(|k| m.eigenvalue(k)).collect();
    if comp.is_gaussian() {
        for (k, v) in values.iter().enumerate() {
            reports.push(
                CheckReport::eq("hermite_eigenvalue", *v, k as f64)
                    .with_tolerance(1e-3)
                    .with_anchor("Hermite spectrum lambda_k = k")
                    .detail("k", k),
            );
        }
    }
    if comp == Component1D::isotropic_uniform() {
        reports.push(
            CheckReport::eq("uniform_poincare", m.poincare_constant().1, 12.0 / (PI * PI))
                .with_tolerance(1e-3)
                .with_anchor("C_P of the isotropic uniform law = 12/pi^2"),
        );
    }
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let x = m.center(&m.x);
    let xf = fine.center(&fine.x);
    let (h, hf) = (m.h_minus1_dual(&x)?, fine.h_minus1_dual(&xf)?);
    reports.push(
        CheckReport::le("grid_doubling_gap", rel(values[1], fine.eigenvalue(1)), 5e-3)
            .with_anchor("relative change of lambda_1 under grid doubling")
            .detail("lambda_1", values[1])
            .detail("eigenvalues", &values),
    );
    reports.push(
        CheckReport::le("grid_doubling_h_minus1", rel(h, hf), 5e-3)
            .with_anchor("relative change of ||x||_{H^-1} under grid doubling")
            .detail("h_minus1", h),
    );
    let atoms = m.spectral_measure(&x)?.atoms_tsv(1e-14);
    Ok(CheckOutput { reports, artifacts: vec![Artifact { kind: "atoms", content: atoms }] })
}

fn spectral_mass_run(c: &ResolvedCheck) -> Result<CheckOutput> {
    single(spectral_mass_sweep(&model(c)?, c.replicas, c.seed)?)
}

fn projection_run(c: &ResolvedCheck) -> Result<CheckOutput> {
    single(projection_transfer_check(32, c.samples, c.seed)?)
}

fn h_minus1_run(c: &ResolvedCheck) -> Result<CheckOutput> {
    let ps = ProductSpectra::new(&measure(c)?, GridOptions::new(c.grid))?;
    Ok(CheckOutput {
        reports: vec![variance_h1_check(&ps)?, sigma_vs_poincare_check(&ps), f_lambda_bound_check(&ps)],
        artifacts: Vec::new(),
    })
}

fn cheeger_run(c: &ResolvedCheck) -> Result<CheckOutput> {
    single(cheeger_buser_check(&model(c)?))
}

fn brenier_run(c: &ResolvedCheck) -> Result<CheckOutput> {
    let d = Density1D::new(component(c)?)?;
    Ok(CheckOutput {
        reports: vec![
            brenier_contraction_1d(&d)?,
            brenier_martingale_representation(&d, c.steps, c.replicas, c.seed)?,
        ],
        artifacts: Vec::new(),
    })
}

fn kim_milman_run(c: &ResolvedCheck) -> Result<CheckOutput> {
    let base = Measure::new(&MeasureSpec::iid(component(c)?, 1))?;
    let (t1, t2) = (c.t1.unwrap_or(0.5), c.t2.unwrap_or(4.0));
    single(kim_milman_ks_check(&base, t1, t2, c.replicas, c.seed, &TiltOptions::default())?)
}

fn deviation_run(c: &ResolvedCheck) -> Result<CheckOutput> {
    let mut reports = Vec::new();
    for kind in [DeviationMartingale::Brownian, DeviationMartingale::Stopped] {
        for &u in &c.u {
            reports.push(martingale_deviation_check(kind, 1.0, u, c.replicas, c.steps, c.seed)?);
        }
    }
    Ok(CheckOutput { reports, artifacts: Vec::new() })
}

fn cefm_run(c: &ResolvedCheck) -> Result<CheckOutput> {
    single(cefm_check(&model(c)?)?)
}

fn reports_run(c: &ResolvedCheck) -> Result<CheckOutput> {
    let ens = ensemble(c)?;
    let mut reports = vec![opnorm_tail_report(&ens, 0.5)];
    for &u in &c.u {
        reports.push(softmax_deviation_report(&ens, u)?);
    }
    Ok(CheckOutput { reports, artifacts: series(&ens) })
}
