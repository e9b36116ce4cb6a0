//! Declarative experiment configuration and its fully resolved form.

use std::collections::BTreeMap;
use std::path::Path;

use loclab::measure::{isotropize, Body, Component1D, MeasureSpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), message: message.into() }
}

/// Short family names accepted in `measure.family` and sweep axes.
pub const FAMILIES: [&str; 11] = [
    "gaussian",
    "exponential",
    "uniform",
    "smooth_laplace",
    "quartic",
    "cube",
    "ball",
    "simplex",
    "cross_polytope",
    "gaussian_cube",
    "strong_quartic",
];

/// Named check collections.
pub const SUITES: [&str; 2] = ["smoke", "full"];

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    pub family: Option<String>,
    pub n: Option<usize>,
    /// Full measure specification; takes precedence over `family`.
    pub spec: Option<MeasureSpec>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    pub replicas: Option<usize>,
    pub samples: Option<usize>,
    pub grid: Option<usize>,
    pub steps: Option<usize>,
    pub horizon: Option<f64>,
}

/// Per-check overrides; every field falls back to the run-level value.
#[derive(Debug, Clone, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CheckEntry {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<f64>>,
    /// `false` records the outcome without letting it set the exit status.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assert: Option<bool>,
}

impl CheckEntry {
    pub fn named(name: &str) -> Self {
        CheckEntry { name: name.into(), ..CheckEntry::default() }
    }
}

/// Sweep axes; the cartesian product of all non-empty axes is run.
#[derive(Debug, Clone, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub family: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub n: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seed: Vec<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub replicas: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub grid: Vec<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub threads: Option<usize>,
    pub suite: Option<String>,
    #[serde(default)]
    pub measure: MeasureConfig,
    #[serde(default)]
    pub budgets: BudgetConfig,
    #[serde(default)]
    pub checks: Vec<CheckEntry>,
    #[serde(default)]
    pub sweep: SweepConfig,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }
}

/// Run-level defaults after resolution.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Budgets {
    pub replicas: usize,
    pub samples: usize,
    pub grid: usize,
    pub steps: usize,
    pub horizon: f64,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets { replicas: 128, samples: 20_000, grid: 2048, steps: 64, horizon: 4.0 }
    }
}

/// One check with every parameter fixed.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ResolvedCheck {
    pub name: String,
    pub label: String,
    pub family: String,
    pub measure: MeasureSpec,
    pub replicas: usize,
    pub samples: usize,
    pub grid: usize,
    pub steps: usize,
    pub horizon: f64,
    pub t: Vec<f64>,
    /// `None` means every recorded pair, where applicable.
    pub t1: Option<f64>,
    pub t2: Option<f64>,
    pub u: Vec<f64>,
    pub assert: bool,
    /// `derive_seed(root, label)`; replica `r` uses stream `r`.
    pub seed: u64,
}

impl ResolvedCheck {
    /// The first coordinate law of the measure, for one-dimensional checks.
    pub fn component(&self) -> Option<Component1D> {
        match &self.measure.family {
            loclab::measure::Family::Gaussian { covariance: None } => Some(Component1D::gaussian()),
            loclab::measure::Family::Product { components } if self.measure.affine.is_none() => {
                components.first().cloned()
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ResolvedConfig {
    pub seed: u64,
    pub suite: Option<String>,
    pub family: String,
    pub n: usize,
    pub measure: MeasureSpec,
    pub budgets: Budgets,
    pub checks: Vec<ResolvedCheck>,
}

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_FAMILY: &str = "gaussian";
pub const DEFAULT_DIMENSION: usize = 4;

/// Isotropic measure for a short family name in dimension `n`.
pub fn family_spec(name: &str, n: usize, field: &str) -> Result<MeasureSpec, ConfigError> {
    if n == 0 {
        return Err(invalid(field, "dimension must be positive"));
    }
    let raw = match name {
        "gaussian" => MeasureSpec::standard_gaussian(n),
        "exponential" => MeasureSpec::iid(Component1D::shifted_exponential(), n),
        "uniform" => MeasureSpec::iid(Component1D::isotropic_uniform(), n),
        "smooth_laplace" => MeasureSpec::iid(Component1D::smooth_laplace(0.5), n),
        "quartic" => MeasureSpec::iid(Component1D::quartic(1.0, 0.25), n),
        "cube" => MeasureSpec::uniform_body(Body::Cube, 1.0, n),
        "ball" => MeasureSpec::uniform_body(Body::Ball, 1.0, n),
        "simplex" => MeasureSpec::uniform_body(Body::Simplex, 1.0, n),
        "cross_polytope" => MeasureSpec::uniform_body(Body::CrossPolytope, 1.0, n),
        "gaussian_cube" => MeasureSpec::gaussian_restricted(Body::Cube, 1.0, 1.0, n),
        "strong_quartic" => return Ok(MeasureSpec::iid(Component1D::quartic(1.0, 0.25), n)),
        other => {
            return Err(invalid(
                field,
                format!("unknown family \"{other}\"; expected one of {}", FAMILIES.join(", ")),
            ))
        }
    };
    // Product components are rescaled in place so that the law stays a product.
    let spec = match raw.family {
        loclab::measure::Family::Product { ref components } => {
            let d = loclab::measure::Density1D::new(components[0].clone())
                .map_err(|e| invalid(field, e.to_string()))?;
            let (mean, var) = (d.mean(), d.var());
            if mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12 {
                raw
            } else {
                let sd = var.sqrt();
                MeasureSpec::iid(components[0].clone().scaled(1.0 / sd, -mean / sd), n)
            }
        }
        _ => isotropize(&raw).map_err(|e| invalid(field, e.to_string()))?,
    };
    Ok(spec)
}

fn positive(v: usize, field: &str) -> Result<usize, ConfigError> {
    if v == 0 {
        Err(invalid(field, "must be positive"))
    } else {
        Ok(v)
    }
}

fn positive_f(v: f64, field: &str) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(field, format!("must be positive and finite, got {v}")))
    }
}

/// Resolves defaults, suites and overrides; `seed` overrides the file value.
pub fn resolve(cfg: &ExperimentConfig, seed_override: Option<u64>) -> Result<ResolvedConfig, ConfigError> {
    let seed = seed_override.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    let n = positive(cfg.measure.n.unwrap_or(DEFAULT_DIMENSION), "measure.n")?;
    let (family, measure) = match (&cfg.measure.spec, &cfg.measure.family) {
        (Some(spec), _) => {
            spec.validate().map_err(|e| invalid("measure.spec", e.to_string()))?;
            ("custom".to_string(), spec.clone())
        }
        (None, fam) => {
            let fam = fam.clone().unwrap_or_else(|| DEFAULT_FAMILY.into());
            let spec = family_spec(&fam, n, "measure.family")?;
            (fam, spec)
        }
    };
    let d = Budgets::default();
    let b = &cfg.budgets;
    let budgets = Budgets {
        replicas: positive(b.replicas.unwrap_or(d.replicas), "budgets.replicas")?,
        samples: positive(b.samples.unwrap_or(d.samples), "budgets.samples")?,
        grid: positive(b.grid.unwrap_or(d.grid), "budgets.grid")?,
        steps: positive(b.steps.unwrap_or(d.steps), "budgets.steps")?,
        horizon: positive_f(b.horizon.unwrap_or(d.horizon), "budgets.horizon")?,
    };
    let mut entries: Vec<CheckEntry> = match cfg.suite.as_deref() {
        None => Vec::new(),
        Some(name) => registry::suite(name)
            .ok_or_else(|| invalid("suite", format!("unknown suite \"{name}\"; expected one of {}", SUITES.join(", "))))?,
    };
    entries.extend(cfg.checks.iter().cloned());
    let mut checks = Vec::with_capacity(entries.len());
    let mut labels = BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        let field = |f: &str| format!("checks[{i}].{f}");
        let info = registry::lookup(&e.name).ok_or_else(|| {
            invalid(field("name"), format!("unknown check \"{}\"; run `loclab list-checks`", e.name))
        })?;
        let label = e.label.clone().unwrap_or_else(|| e.name.clone());
        if label.is_empty() || !label.chars().all(|ch| ch.is_ascii_alphanumeric() || "_.-".contains(ch)) {
            return Err(invalid(field("label"), format!("label \"{label}\" must use [A-Za-z0-9_.-]")));
        }
        if labels.insert(label.clone(), i).is_some() {
            return Err(invalid(field("label"), format!("duplicate label \"{label}\"")));
        }
        let check_n = positive(e.n.unwrap_or(n), &field("n"))?;
        let (check_family, check_measure) = match &e.family {
            Some(f) => (f.clone(), family_spec(f, check_n, &field("family"))?),
            None if e.n.is_some() && family != "custom" => (family.clone(), family_spec(&family, check_n, &field("n"))?),
            None => (family.clone(), measure.clone()),
        };
        let t = e.t.clone().unwrap_or_else(|| info.default_t.to_vec());
        for (k, v) in t.iter().enumerate() {
            positive_f(*v, &format!("checks[{i}].t[{k}]"))?;
        }
        let t1 = e.t1.or(info.default_t1).map(|v| positive_f(v, &field("t1"))).transpose()?;
        let t2 = e.t2.or(info.default_t2).map(|v| positive_f(v, &field("t2"))).transpose()?;
        match (t1, t2) {
            (Some(a), Some(b)) if a > b => {
                return Err(invalid(field("t1"), format!("t1 = {a} exceeds t2 = {b}")));
            }
            (Some(_), None) | (None, Some(_)) => {
                return Err(invalid(field("t2"), "t1 and t2 must be given together"));
            }
            _ => {}
        }
        let u = e.u.clone().unwrap_or_else(|| vec![1.0, 2.0, 3.0]);
        for (k, v) in u.iter().enumerate() {
            positive_f(*v, &format!("checks[{i}].u[{k}]"))?;
        }
        checks.push(ResolvedCheck {
            name: e.name.clone(),
            seed: loclab::rng::derive_seed(seed, &label),
            label,
            family: check_family,
            measure: check_measure,
            replicas: positive(e.replicas.unwrap_or(budgets.replicas), &field("replicas"))?,
            samples: positive(e.samples.unwrap_or(budgets.samples), &field("samples"))?,
            grid: positive(e.grid.unwrap_or(budgets.grid), &field("grid"))?,
            steps: positive(e.steps.unwrap_or(budgets.steps), &field("steps"))?,
            horizon: positive_f(e.horizon.unwrap_or(budgets.horizon), &field("horizon"))?,
            t,
            t1,
            t2,
            u,
            assert: e.assert.unwrap_or(true),
        });
    }
    Ok(ResolvedConfig { seed, suite: cfg.suite.clone(), family, n, measure, budgets, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_family_names_the_field() {
        let cfg = ExperimentConfig::parse("[measure]\nfamily = \"cauchy\"\n").unwrap();
        let err = resolve(&cfg, None).unwrap_err().to_string();
        assert!(err.starts_with("measure.family: unknown family \"cauchy\""), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::parse("[budgets]\nreplica = 3\n").is_err());
    }

    #[test]
    fn seeds_follow_labels() {
        let cfg = ExperimentConfig::parse(
            "seed = 5\n[[checks]]\nname = \"cefm\"\n[[checks]]\nname = \"cefm\"\nlabel = \"again\"\n",
        )
        .unwrap();
        let r = resolve(&cfg, None).unwrap();
        assert_eq!(r.checks[0].seed, loclab::rng::derive_seed(5, "cefm"));
        assert_ne!(r.checks[0].seed, r.checks[1].seed);
        assert_eq!(resolve(&cfg, Some(6)).unwrap().seed, 6);
    }

    #[test]
    fn families_are_isotropic() {
        // `strong_quartic` stays at its natural scale to keep (-log rho)'' >= 1.
        for f in FAMILIES.iter().filter(|f| **f != "strong_quartic") {
            let spec = family_spec(f, 2, "f").unwrap();
            let m = loclab::measure::Measure::new(&spec).unwrap();
            m.require_isotropic().unwrap_or_else(|e| panic!("{f}: {e}"));
        }
    }
}
