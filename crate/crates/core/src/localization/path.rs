//! Euler–Maruyama simulation of the tilt process
//! `d theta = dW + a(t, theta) dt`, `theta_0 = 0`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::softmax::{default_beta, softmax_value, softmax_weights};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::measure::{Law, Measure};
use crate::rng::{derive_seed, stream};
use crate::stats::{Budget, Estimate};
use crate::tilted::{tilt, TiltOptions};

pub const DEFAULT_POINTS: usize = 64;
pub const DEFAULT_SUBSTEPS: usize = 16;
pub const DEFAULT_T_MIN: f64 = 1e-3;
/// Monte Carlo sample size for the drift estimate when no quadrature exists.
pub const DRIFT_SAMPLES: usize = 4096;

/// Recorded times (starting at 0) with uniform substeps in each interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub recorded: Vec<f64>,
    pub substeps: usize,
}

impl TimeGrid {
    /// `0` followed by `points` geometric times from `t_min` to `horizon`.
    pub fn geometric(t_min: f64, horizon: f64, points: usize, substeps: usize) -> Result<Self> {
        if !(horizon > 0.0 && t_min > 0.0 && t_min <= horizon) || points < 1 || substeps < 1 {
            return Err(Error::InvalidArgument(format!(
                "bad time grid: t_min {t_min}, horizon {horizon}, points {points}, substeps {substeps}"
            )));
        }
        let mut recorded = vec![0.0];
        if points == 1 {
            recorded.push(horizon);
        } else {
            let r = (horizon / t_min).ln() / (points - 1) as f64;
            recorded.extend((0..points).map(|k| t_min * (r * k as f64).exp()));
            *recorded.last_mut().unwrap() = horizon;
        }
        Ok(TimeGrid { recorded, substeps })
    }

    pub fn uniform(horizon: f64, intervals: usize, substeps: usize) -> Result<Self> {
        if !(horizon > 0.0) || intervals < 1 || substeps < 1 {
            return Err(Error::InvalidArgument("bad uniform grid".into()));
        }
        let recorded = (0..=intervals).map(|k| horizon * k as f64 / intervals as f64).collect();
        Ok(TimeGrid { recorded, substeps })
    }

    pub fn default_for(horizon: f64) -> Result<Self> {
        Self::geometric(DEFAULT_T_MIN.min(horizon), horizon, DEFAULT_POINTS, DEFAULT_SUBSTEPS)
    }

    pub fn horizon(&self) -> f64 {
        *self.recorded.last().unwrap()
    }

    pub fn step_count(&self) -> usize {
        (self.recorded.len() - 1) * self.substeps
    }

    /// Same recorded times, twice the substeps.
    pub fn refined(&self) -> Self {
        TimeGrid { recorded: self.recorded.clone(), substeps: 2 * self.substeps }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathConfig {
    /// Inner options for the drift `a(t, theta)` at every substep.
    pub drift: TiltOptions,
    /// Options for the full statistics at recorded times.
    pub record: TiltOptions,
    /// Soft-max inverse temperature; `2 log n` when `None`.
    pub beta: Option<f64>,
    pub keep_increments: bool,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            drift: TiltOptions { budget: Budget::new(DRIFT_SAMPLES, 0), third_moments: false, ..TiltOptions::default() },
            record: TiltOptions { budget: Budget::new(DRIFT_SAMPLES, 0), ..TiltOptions::default() },
            beta: None,
            keep_increments: false,
        }
    }
}

/// State at one recorded time.
#[derive(Debug, Clone)]
pub struct PathRecord {
    pub t: f64,
    pub theta: Vec<f64>,
    pub a: Vec<f64>,
    pub cov: Matrix,
    pub eigenvalues: Vec<f64>,
    pub a_sq: f64,
    pub tr_a2: f64,
    pub tr_a3: f64,
    pub op_norm: f64,
    /// `sum |H_ij|^2`.
    pub h_sq: f64,
    pub softmax: f64,
    /// Martingale part of the soft-max potential, `int <v, dW>`.
    pub softmax_martingale: f64,
    /// Its quadratic variation `int |v|^2 dt`.
    pub softmax_qv: f64,
}

impl PathRecord {
    /// `sum |lambda_i|^q`.
    pub fn schatten(&self, q: f64) -> f64 {
        self.eigenvalues.iter().map(|l| l.abs().powf(q)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub at: f64,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LocalizationPath {
    pub dimension: usize,
    pub grid: TimeGrid,
    pub records: Vec<PathRecord>,
    /// `(t, Tr A^2)` at every substep when the drift is exact.
    pub fine_tr_a2: Vec<(f64, f64)>,
    /// Brownian increments, `step_count × dimension`, when kept.
    pub increments: Vec<f64>,
    /// Whether the soft-max martingale part was tracked at every substep.
    pub martingale_tracked: bool,
    pub beta: f64,
    pub seed: u64,
    pub stream_id: u64,
    pub truncated: Option<Truncation>,
}

impl LocalizationPath {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }
}

/// Drift evaluation: barycenter and, where exact, the diagonal covariance and
/// third moments.
struct Drift {
    a: Vec<f64>,
    diag: Option<(Vec<f64>, Vec<f64>)>,
}

fn drift(base: &Measure, t: f64, theta: &[f64], opts: &TiltOptions) -> Result<Drift> {
    match base.law() {
        Law::Product(ds) => {
            let mut a = Vec::with_capacity(ds.len());
            let mut var = Vec::with_capacity(ds.len());
            let mut m3 = Vec::with_capacity(ds.len());
            for (d, th) in ds.iter().zip(theta) {
                let m = d.tilt_moments(t, *th, opts.panels, opts.force_quadrature);
                a.push(m.mean);
                var.push(m.var);
                m3.push(m.m3);
            }
            Ok(Drift { a, diag: Some((var, m3)) })
        }
        _ => {
            let s = tilt(base, t, theta.to_vec())?.stats(opts)?;
            Ok(Drift { a: s.a, diag: None })
        }
    }
}

fn record(base: &Measure, t: f64, theta: &[f64], opts: &TiltOptions, beta: f64, mart: (f64, f64)) -> Result<PathRecord> {
    let s = tilt(base, t, theta.to_vec())?.stats(opts)?;
    let eigenvalues = linalg::sym_eigenvalues(&s.cov);
    let op_norm = eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(PathRecord {
        t,
        theta: theta.to_vec(),
        a_sq: s.a.iter().map(|v| v * v).sum(),
        tr_a2: s.tr_a2(),
        tr_a3: s.tr_a3(),
        op_norm,
        h_sq: s.h_sq.value,
        softmax: softmax_value(&eigenvalues, beta),
        softmax_martingale: mart.0,
        softmax_qv: mart.1,
        a: s.a,
        cov: s.cov,
        eigenvalues,
    })
}

/// One path of the tilt process on `grid`. Failures of the inner statistics
/// truncate the path and are recorded, never dropped.
pub fn simulate_path(
    base: &Measure,
    grid: &TimeGrid,
    config: &PathConfig,
    seed: u64,
    stream_id: u64,
) -> Result<LocalizationPath> {
    base.require_isotropic()?;
    if grid.recorded.first() != Some(&0.0) || grid.recorded.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("time grid must start at 0 and increase".into()));
    }
    let n = base.dimension();
    let beta = config.beta.unwrap_or_else(|| default_beta(n));
    let mut rng = stream(derive_seed(seed, "brownian"), stream_id);
    let exact_drift = matches!(base.law(), Law::Product(_));
    let gaussian = matches!(base.law(), Law::Gaussian { .. });
    let mut path = LocalizationPath {
        dimension: n,
        grid: grid.clone(),
        records: Vec::with_capacity(grid.recorded.len()),
        fine_tr_a2: vec![],
        increments: vec![],
        martingale_tracked: exact_drift || gaussian,
        beta,
        seed,
        stream_id,
        truncated: None,
    };
    let mut theta = vec![0.0; n];
    let (mut mart, mut qv) = (0.0, 0.0);
    let mut dw = vec![0.0; n];
    let with_stream = |o: &TiltOptions, k: u64| TiltOptions {
        budget: Budget { seed: derive_seed(seed, "drift"), ..o.budget },
        stream: (stream_id << 24) ^ k,
        ..*o
    };

    for (r, w) in grid.recorded.windows(2).enumerate() {
        match record(base, w[0], &theta, &with_stream(&config.record, u64::MAX - r as u64), beta, (mart, qv)) {
            Ok(rec) => path.records.push(rec),
            Err(e) => {
                path.truncated = Some(Truncation { at: w[0], reason: e.to_string() });
                return Ok(path);
            }
        }
        let dt = (w[1] - w[0]) / grid.substeps as f64;
        let sd = dt.sqrt();
        for k in 0..grid.substeps {
            let t = w[0] + dt * k as f64;
            let step = (r * grid.substeps + k) as u64;
            let d = match drift(base, t, &theta, &with_stream(&config.drift, step)) {
                Ok(d) => d,
                Err(e) => {
                    path.truncated = Some(Truncation { at: t, reason: e.to_string() });
                    return Ok(path);
                }
            };
            for v in dw.iter_mut() {
                *v = sd * rng.sample::<f64, _>(StandardNormal);
            }
            if let Some((var, m3)) = &d.diag {
                path.fine_tr_a2.push((t, var.iter().map(|v| v * v).sum()));
                // v_i = alpha_i m3_i for diagonal A
                let alpha = softmax_weights(var, beta);
                let v: Vec<f64> = alpha.iter().zip(m3).map(|(a, m)| a * m).collect();
                mart += linalg::dot(&v, &dw);
                qv += linalg::dot(&v, &v) * dt;
            } else if gaussian {
                let v = 1.0 / (1.0 + t);
                path.fine_tr_a2.push((t, n as f64 * v * v));
            }
            if config.keep_increments {
                path.increments.extend_from_slice(&dw);
            }
            for i in 0..n {
                theta[i] += dw[i] + d.a[i] * dt;
            }
        }
    }
    let t_end = grid.horizon();
    match record(base, t_end, &theta, &with_stream(&config.record, u64::MAX - grid.recorded.len() as u64), beta, (mart, qv)) {
        Ok(rec) => {
            if exact_drift || gaussian {
                path.fine_tr_a2.push((t_end, rec.tr_a2));
            }
            path.records.push(rec);
        }
        Err(e) => path.truncated = Some(Truncation { at: t_end, reason: e.to_string() }),
    }
    Ok(path)
}

/// Replicas of the tilt process on consecutive stream ids.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub paths: Vec<LocalizationPath>,
    pub grid: TimeGrid,
    pub seed: u64,
}

/// Per-time means with standard errors over complete replicas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub replicas: usize,
    pub truncated: usize,
    pub a_sq: Series,
    pub tr_a2: Series,
    pub schatten_q: f64,
    pub schatten: Series,
    pub softmax: Series,
}

pub fn simulate_ensemble(
    base: &Measure,
    grid: &TimeGrid,
    config: &PathConfig,
    replicas: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    base.require_isotropic()?;
    let paths = (0..replicas as u64)
        .into_par_iter()
        .map(|r| simulate_path(base, grid, config, seed, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(PathEnsemble { paths, grid: grid.clone(), seed })
}

impl PathEnsemble {
    pub fn times(&self) -> &[f64] {
        &self.grid.recorded
    }

    /// Replicas that reached the horizon.
    pub fn complete(&self) -> impl Iterator<Item = &LocalizationPath> {
        self.paths.iter().filter(|p| p.truncated.is_none())
    }

    pub fn complete_count(&self) -> usize {
        self.complete().count()
    }

    /// Per-time mean and SE of `f(record)` over complete replicas.
    pub fn series(&self, f: impl Fn(&PathRecord) -> f64) -> Series {
        let times = self.grid.recorded.clone();
        let mut mean = Vec::with_capacity(times.len());
        let mut se = Vec::with_capacity(times.len());
        for k in 0..times.len() {
            let vals: Vec<f64> = self.complete().map(|p| f(&p.records[k])).collect();
            let e = Estimate::from_samples(&vals);
            mean.push(e.value);
            se.push(e.se);
        }
        Series { times, mean, se }
    }

    /// Per-replica values of `f` at recorded index `k`.
    pub fn values_at(&self, k: usize, f: impl Fn(&PathRecord) -> f64) -> Vec<f64> {
        self.complete().map(|p| f(&p.records[k])).collect()
    }

    pub fn summary(&self, q: f64) -> EnsembleSummary {
        EnsembleSummary {
            replicas: self.paths.len(),
            truncated: self.paths.len() - self.complete_count(),
            a_sq: self.series(|r| r.a_sq),
            tr_a2: self.series(|r| r.tr_a2),
            schatten_q: q,
            schatten: self.series(|r| r.schatten(q)),
            softmax: self.series(|r| r.softmax),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{Component1D, MeasureSpec};

    #[test]
    fn gaussian_covariance_is_deterministic() {
        let m = Measure::new(&MeasureSpec::standard_gaussian(3)).unwrap();
        let grid = TimeGrid::geometric(1e-2, 2.0, 8, 4).unwrap();
        let p = simulate_path(&m, &grid, &PathConfig::default(), 7, 0).unwrap();
        assert!(p.truncated.is_none());
        for r in &p.records {
            for i in 0..3 {
                assert!((r.cov[(i, i)] - 1.0 / (1.0 + r.t)).abs() < 1e-12);
                assert!((r.a[i] - r.theta[i] / (1.0 + r.t)).abs() < 1e-12);
            }
        }
        assert_eq!(p.records[0].a_sq, 0.0);
    }

    #[test]
    fn brownian_reproducibility() {
        let m = Measure::new(&MeasureSpec::iid(Component1D::shifted_exponential(), 2)).unwrap();
        let grid = TimeGrid::geometric(1e-2, 1.0, 6, 4).unwrap();
        let cfg = PathConfig { keep_increments: true, ..PathConfig::default() };
        let a = simulate_path(&m, &grid, &cfg, 11, 3).unwrap();
        let b = simulate_path(&m, &grid, &cfg, 11, 3).unwrap();
        assert_eq!(a.increments, b.increments);
        assert_eq!(a.records.last().unwrap().theta, b.records.last().unwrap().theta);
        let c = simulate_path(&m, &grid, &cfg, 11, 4).unwrap();
        assert_ne!(a.increments, c.increments);
    }

    #[test]
    fn geometric_grid_shape() {
        let g = TimeGrid::default_for(4.0).unwrap();
        assert_eq!(g.recorded.len(), 65);
        assert_eq!(g.recorded[0], 0.0);
        assert!((g.recorded[1] - 1e-3).abs() < 1e-15);
        assert_eq!(g.horizon(), 4.0);
        assert_eq!(g.step_count(), 64 * 16);
    }
}
